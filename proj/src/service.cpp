// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/service.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "httplib.h"
#include "paramstyle/checkpoint.hpp"
#include "paramstyle/convert.hpp"
#include "paramstyle/evaluation.hpp"
#include "paramstyle/hash.hpp"
#include "paramstyle/image.hpp"
#include "paramstyle/pipeline.hpp"
#include "paramstyle/scene.hpp"

namespace paramstyle {

using nlohmann::json;

namespace {

constexpr float kMaxLambda = 2.0f;
constexpr int kMaxSteps = 1000;
constexpr int kMaxIterations = 100;
constexpr std::size_t kMaxGrid = 64;

std::string iso_time(std::chrono::system_clock::time_point tp) {
  if (tp.time_since_epoch().count() == 0) return {};
  const auto t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string png_b64(const ImageBuffer& img) {
  return base64_encode(encode_png(quantize8(img)));
}

[[noreturn]] void unprocessable(const std::string& message) {
  throw ApiError(422, "invalid_request", message);
}

double number_field(const json& req, const char* key, double fallback) {
  if (!req.contains(key)) return fallback;
  if (!req[key].is_number()) unprocessable(std::string(key) + " must be a number");
  const double v = req[key].get<double>();
  if (!std::isfinite(v)) unprocessable(std::string(key) + " must be finite");
  return v;
}

int int_field(const json& req, const char* key, int fallback, int lo, int hi) {
  if (!req.contains(key)) return fallback;
  if (!req[key].is_number_integer()) unprocessable(std::string(key) + " must be an integer");
  const auto v = req[key].get<std::int64_t>();
  if (v < lo || v > hi) {
    unprocessable(std::string(key) + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

std::uint64_t seed_field(const json& req, const char* key) {
  if (!req.contains(key)) return 0;
  if (!req[key].is_number_unsigned()) unprocessable(std::string(key) + " must be a non-negative integer");
  return req[key].get<std::uint64_t>();
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

std::map<std::string, float> lambda_field(const json& req, const std::vector<std::string>& attributes) {
  std::map<std::string, float> out;
  if (!req.contains("lambda")) return out;
  const auto& l = req["lambda"];
  if (!l.is_object()) unprocessable("lambda must be an object of attribute -> value");
  for (const auto& [name, value] : l.items()) {
    if (std::find(attributes.begin(), attributes.end(), name) == attributes.end()) {
      unprocessable("unknown attribute '" + name + "' (known: " + join(attributes) + ")");
    }
    if (!value.is_number() || !std::isfinite(value.get<double>())) {
      unprocessable("lambda." + name + " must be a finite number");
    }
    const auto v = value.get<float>();
    if (v < 0.0f || v > kMaxLambda) unprocessable("lambda." + name + " must lie in [0, 2]");
    out[name] = v;
  }
  return out;
}

GuidanceConfig guidance_field(const json& req) {
  GuidanceConfig g;
  g.w1 = number_field(req, "w1", g.w1);
  g.w = g.w1;
  g.w2 = number_field(req, "w2", g.w2);
  g.act_t = number_field(req, "act_t", g.act_t);
  if (g.act_t < 0.0 || g.act_t > 1.0) unprocessable("act_t must lie in [0, 1]");
  if (g.w1 < 0.0 || g.w2 < 0.0) unprocessable("guidance weights must be non-negative");
  return g;
}

std::vector<double> grid_field(const json& req) {
  if (!req.contains("grid")) return uniform_grid(0.0, 1.0, 0.1);
  const auto& g = req["grid"];
  if (!g.is_array() || g.empty() || g.size() > kMaxGrid) {
    unprocessable("grid must be a non-empty array of at most " + std::to_string(kMaxGrid) + " values");
  }
  std::vector<double> out;
  for (const auto& v : g) {
    if (!v.is_number()) unprocessable("grid values must be numbers");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < 0.0 || x > kMaxLambda) unprocessable("grid values must lie in [0, 2]");
    out.push_back(x);
  }
  return out;
}

json error_body(const std::string& code, const std::string& message) {
  return json{{"code", code}, {"message", message}};
}

}  // namespace

std::string to_string(JobState state) {
  switch (state) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

json Job::to_json() const {
  json j{{"id", id},
         {"kind", kind},
         {"model", model},
         {"state", to_string(state)},
         {"created", iso_time(created)}};
  if (state != JobState::kQueued) j["started"] = iso_time(started);
  if (state == JobState::kDone || state == JobState::kFailed) {
    j["finished"] = iso_time(finished);
    j["runtime_seconds"] = std::chrono::duration<double>(finished - started).count();
  }
  if (state == JobState::kDone) j["result"] = result;
  if (state == JobState::kFailed) j["error"] = error;
  return j;
}

ModelSpec parse_model_spec(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw std::invalid_argument("model spec must look like name=bundle.ckpt[,adapter.ckpt]: " + text);
  }
  ModelSpec spec;
  spec.name = text.substr(0, eq);
  const auto rest = text.substr(eq + 1);
  const auto comma = rest.find(',');
  spec.bundle = rest.substr(0, comma);
  if (comma != std::string::npos) spec.adapter = rest.substr(comma + 1);
  return spec;
}

struct EditService::Entry {
  std::string name;
  std::string bundle_path;
  StyleModel model{nullptr};
  std::string fingerprint;
  std::deque<std::string> queue;
  std::thread worker;
};

EditService::EditService(std::size_t queue_capacity) : capacity_(queue_capacity) {}

EditService::~EditService() { shutdown(); }

void EditService::add_model(const ModelSpec& spec) {
  auto model = load_bundle(spec.bundle);
  if (!spec.adapter.empty()) load_adapter(model, spec.adapter);
  add_model(spec.name, std::move(model), spec.bundle.string());
}

void EditService::add_model(const std::string& name, StyleModel model, const std::string& bundle_path) {
  auto entry = std::make_unique<Entry>();
  entry->name = name;
  entry->bundle_path = bundle_path;
  model->eval();
  entry->fingerprint = model->frozen_fingerprint();
  entry->model = std::move(model);
  std::unique_lock lock(models_mutex_);
  if (models_.count(name)) throw std::invalid_argument("model '" + name + "' is already registered");
  auto* raw = entry.get();
  models_[name] = std::move(entry);
  raw->worker = std::thread([this, raw] { worker_loop(raw); });
}

json EditService::list_models() const {
  std::shared_lock lock(models_mutex_);
  json out = json::array();
  for (const auto& [name, e] : models_) {
    out.push_back({{"name", name},
                   {"bundle", e->bundle_path},
                   {"attributes", e->model->attributes()},
                   {"fingerprint", e->fingerprint},
                   {"resolution", e->model->config().image_size}});
  }
  return out;
}

EditService::Entry& EditService::entry_for(const std::string& model) {
  std::shared_lock lock(models_mutex_);
  const auto it = models_.find(model);
  if (it == models_.end()) throw ApiError(404, "unknown_model", "unknown model '" + model + "'");
  return *it->second;
}

void EditService::validate(const std::string& kind, Entry& entry, const json& req) {
  const auto& attributes = entry.model->attributes();
  const int size = entry.model->config().image_size;
  int_field(req, "steps", 50, 1, kMaxSteps);
  const auto check_base = [&](const json& r) {
    if (r.contains("base")) {
      const auto& base = r["base"];
      if (!base.is_object()) unprocessable("base must be an object");
      if (base.contains("inversion_id")) {
        if (!base["inversion_id"].is_string()) unprocessable("base.inversion_id must be a string");
        std::shared_lock lock(inversions_mutex_);
        const auto it = inversions_.find(base["inversion_id"].get<std::string>());
        if (it == inversions_.end() || it->second.model != entry.name) {
          throw ApiError(404, "unknown_inversion", "unknown inversion '" + base["inversion_id"].get<std::string>() + "'");
        }
        return;
      }
      seed_field(base, "seed");
      int_field(base, "prompt_id", 0, 0, kPromptVocabularySize - 1);
    }
  };
  if (kind == "generate") {
    seed_field(req, "seed");
    int_field(req, "prompt_id", 0, 0, kPromptVocabularySize - 1);
    guidance_field(req);
  } else if (kind == "edit" || kind == "sweep") {
    if (!entry.model->has_adapter()) unprocessable("model '" + entry.name + "' has no style adapter");
    check_base(req);
    guidance_field(req);
    if (kind == "edit") {
      lambda_field(req, attributes);
    } else {
      if (!req.contains("attribute") || !req["attribute"].is_string()) unprocessable("attribute is required");
      const auto name = req["attribute"].get<std::string>();
      if (std::find(attributes.begin(), attributes.end(), name) == attributes.end()) {
        unprocessable("unknown attribute '" + name + "' (known: " + join(attributes) + ")");
      }
      grid_field(req);
    }
  } else if (kind == "invert") {
    if (!entry.model->has_adapter()) unprocessable("model '" + entry.name + "' has no style adapter");
    if (!req.contains("image") || !req["image"].is_string()) unprocessable("image (base64 PNG) is required");
    int_field(req, "prompt_id", -1, -1, kPromptVocabularySize - 1);
    int_field(req, "iterations", 10, 0, kMaxIterations);
    guidance_field(req);
    ImageBuffer img;
    try {
      img = decode_png(base64_decode(req["image"].get<std::string>()));
    } catch (const std::exception& e) {
      unprocessable(std::string("image is not a valid base64 PNG: ") + e.what());
    }
    if (img.width != size || img.height != size) {
      unprocessable("image must be " + std::to_string(size) + "x" + std::to_string(size));
    }
  } else {
    throw ApiError(404, "unknown_endpoint", "unknown job kind '" + kind + "'");
  }
}

Job EditService::submit(const std::string& kind, const json& request) {
  if (!request.is_object()) unprocessable("request body must be a JSON object");
  if (!request.contains("model") || !request["model"].is_string()) unprocessable("model is required");
  const auto model = request["model"].get<std::string>();
  auto& entry = entry_for(model);
  validate(kind, entry, request);

  Job job;
  job.kind = kind;
  job.model = model;
  job.request = request;
  job.created = std::chrono::system_clock::now();
  std::lock_guard qlock(queue_mutex_);
  if (stopping_) throw ApiError(503, "shutting_down", "service is shutting down");
  if (pending_ >= capacity_) {
    throw ApiError(503, "queue_full", "job queue is full (" + std::to_string(capacity_) + " pending)");
  }
  {
    std::unique_lock jlock(jobs_mutex_);
    job.id = "job-" + std::to_string(next_job_++);
    jobs_[job.id] = job;
  }
  entry.queue.push_back(job.id);
  ++pending_;
  queue_cv_.notify_all();
  return job;
}

std::optional<Job> EditService::job(const std::string& id) const {
  std::shared_lock lock(jobs_mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::optional<Job> EditService::wait(const std::string& id, std::chrono::milliseconds timeout) const {
  std::shared_lock lock(jobs_mutex_);
  const auto finished = [&] {
    const auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.state == JobState::kDone || it->second.state == JobState::kFailed;
  };
  jobs_changed_.wait_for(lock, timeout, finished);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void EditService::set_paused(bool paused) {
  std::lock_guard lock(queue_mutex_);
  paused_ = paused;
  queue_cv_.notify_all();
}

void EditService::update(const std::string& id, const std::function<void(Job&)>& fn) {
  {
    std::unique_lock lock(jobs_mutex_);
    fn(jobs_.at(id));
  }
  jobs_changed_.notify_all();
}

void EditService::worker_loop(Entry* entry) {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || (!paused_ && !entry->queue.empty()); });
      if (stopping_) return;
      id = entry->queue.front();
      entry->queue.pop_front();
      --pending_;
    }
    Job snapshot;
    update(id, [&](Job& j) {
      j.state = JobState::kRunning;
      j.started = std::chrono::system_clock::now();
      snapshot = j;
    });
    json result;
    json error;
    try {
      result = run_job(*entry, snapshot);
    } catch (const ApiError& e) {
      error = error_body(e.code, e.what());
    } catch (const std::exception& e) {
      error = error_body("internal_error", e.what());
    }
    update(id, [&](Job& j) {
      j.finished = std::chrono::system_clock::now();
      if (error.is_null()) {
        j.state = JobState::kDone;
        j.result = std::move(result);
      } else {
        j.state = JobState::kFailed;
        j.error = std::move(error);
      }
    });
  }
}

json EditService::run_job(Entry& entry, const Job& job) {
  if (job.kind == "generate") return run_generate(entry, job.request);
  if (job.kind == "edit") return run_edit(entry, job.request);
  if (job.kind == "invert") return run_invert(entry, job.request);
  if (job.kind == "sweep") return run_sweep(entry, job.request);
  throw ApiError(404, "unknown_endpoint", "unknown job kind '" + job.kind + "'");
}

json EditService::run_generate(Entry& entry, const json& req) {
  RenderRequest r;
  r.prompt_id = int_field(req, "prompt_id", 0, 0, kPromptVocabularySize - 1);
  r.seed = seed_field(req, "seed");
  r.steps = int_field(req, "steps", 50, 1, kMaxSteps);
  r.guidance = guidance_field(req);
  const auto img = render(entry.model, r);
  return json{{"png", png_b64(img)},
              {"width", img.width},
              {"height", img.height},
              {"seed", r.seed},
              {"prompt_id", r.prompt_id}};
}

json EditService::run_edit(Entry& entry, const json& req) {
  const auto lambda = lambda_field(req, entry.model->attributes());
  const auto guidance = guidance_field(req);
  const json base = req.value("base", json::object());
  ImageBuffer base_img, edited;
  if (base.contains("inversion_id")) {
    CachedInversion cached;
    {
      std::shared_lock lock(inversions_mutex_);
      const auto it = inversions_.find(base["inversion_id"].get<std::string>());
      if (it == inversions_.end()) throw ApiError(404, "unknown_inversion", "inversion was evicted");
      cached = it->second;
    }
    base_img = latent_to_image(cached.record.reconstruction);
    edited = render_inverted(entry.model, cached.record, lambda, guidance);
  } else {
    RenderRequest r;
    r.prompt_id = int_field(base, "prompt_id", 0, 0, kPromptVocabularySize - 1);
    r.seed = seed_field(base, "seed");
    r.steps = int_field(req, "steps", 50, 1, kMaxSteps);
    r.guidance = guidance;
    base_img = render(entry.model, r);
    r.lambda = lambda;
    edited = render(entry.model, r);
  }
  return json{{"png", png_b64(edited)},
              {"lambda", lambda},
              {"w2", guidance.w2},
              {"act_t", guidance.act_t},
              {"distance_to_base", perceptual_distance(quantize8(edited), quantize8(base_img))}};
}

json EditService::run_invert(Entry& entry, const json& req) {
  const auto img = decode_png(base64_decode(req["image"].get<std::string>()));
  InversionConfig cfg;
  cfg.prompt_id = int_field(req, "prompt_id", -1, -1, kPromptVocabularySize - 1);
  cfg.iterations = int_field(req, "iterations", 10, 0, kMaxIterations);
  cfg.steps = int_field(req, "steps", 50, 1, kMaxSteps);
  cfg.guidance = guidance_field(req);
  // Cache key: frozen weights (fingerprint), image and inversion settings.
  Sha256 h;
  h.update(entry.fingerprint);
  h.update(entry.name);
  h.update(inversion_key(img, cfg));
  const auto id = "inv-" + h.hex_digest().substr(0, 24);
  {
    std::shared_lock lock(inversions_mutex_);
    if (const auto it = inversions_.find(id); it != inversions_.end()) {
      auto out = it->second.reconstruction;
      out["inversion_id"] = id;
      out["cached"] = true;
      return out;
    }
  }
  CachedInversion cached;
  cached.model = entry.name;
  cached.record = invert(entry.model, img.channels == 3 ? img : gray_to_rgb(to_gray(img)), cfg);
  const auto recon = latent_to_image(cached.record.reconstruction);
  const auto target = quantize8(img.channels == 3 ? img : gray_to_rgb(to_gray(img)));
  cached.reconstruction = json{{"reconstruction", png_b64(recon)},
                               {"psnr", psnr(quantize8(recon), target)},
                               {"initial_objective", cached.record.initial_objective},
                               {"final_objective", cached.record.final_objective}};
  auto out = cached.reconstruction;
  out["inversion_id"] = id;
  out["cached"] = false;
  std::unique_lock lock(inversions_mutex_);
  inversions_.emplace(id, std::move(cached));
  return out;
}

json EditService::run_sweep(Entry& entry, const json& req) {
  const auto attribute = req["attribute"].get<std::string>();
  const auto grid = grid_field(req);
  const auto guidance = guidance_field(req);
  const json base = req.value("base", json::object());
  std::optional<InversionRecord> record;
  RenderRequest r;
  if (base.contains("inversion_id")) {
    std::shared_lock lock(inversions_mutex_);
    const auto it = inversions_.find(base["inversion_id"].get<std::string>());
    if (it == inversions_.end()) throw ApiError(404, "unknown_inversion", "inversion was evicted");
    record = it->second.record;
  } else {
    r.prompt_id = int_field(base, "prompt_id", 0, 0, kPromptVocabularySize - 1);
    r.seed = seed_field(base, "seed");
    r.steps = int_field(req, "steps", 50, 1, kMaxSteps);
    r.guidance = guidance;
  }
  const auto run = [&](double value) {
    std::map<std::string, float> lambda;
    if (value != 0.0) lambda[attribute] = static_cast<float>(value);
    if (record) return render_inverted(entry.model, *record, lambda, guidance);
    auto rr = r;
    rr.lambda = lambda;
    return render(entry.model, rr);
  };
  const auto reference = quantize8(run(0.0));
  std::vector<ImageBuffer> images;
  json rows = json::array();
  std::ostringstream csv;
  csv << "lambda,distance\n";
  for (double value : grid) {
    auto img = quantize8(run(value));
    const double d = perceptual_distance(img, reference);
    csv << value << ',' << d << '\n';
    rows.push_back({{"lambda", value}, {"png", png_b64(img)}, {"distance", d}});
    images.push_back(std::move(img));
  }
  return json{{"attribute", attribute},
              {"grid", grid},
              {"images", rows},
              {"strip", png_b64(hstack(images))},
              {"csv", csv.str()}};
}

void EditService::install_routes(httplib::Server& server) {
  const auto send = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) {
    std::size_t queued = 0;
    {
      std::lock_guard lock(queue_mutex_);
      queued = pending_;
    }
    std::size_t models = 0;
    {
      std::shared_lock lock(models_mutex_);
      models = models_.size();
    }
    send(res, 200, json{{"status", "ok"}, {"models", models}, {"queued", queued}, {"capacity", capacity_}});
  });
  server.Get("/api/models", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, 200, list_models());
  });
  server.Get(R"(/api/jobs/([A-Za-z0-9\-]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto found = job(req.matches[1].str());
    if (!found) return send(res, 404, error_body("unknown_job", "unknown job '" + req.matches[1].str() + "'"));
    send(res, 200, found->to_json());
  });
  for (const std::string kind : {"generate", "edit", "invert", "sweep"}) {
    server.Post("/api/" + kind, [this, send, kind](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        return send(res, 400, error_body("bad_json", e.what()));
      }
      try {
        send(res, 202, submit(kind, body).to_json());
      } catch (const ApiError& e) {
        send(res, e.status, error_body(e.code, e.what()));
      } catch (const std::exception& e) {
        send(res, 500, error_body("internal_error", e.what()));
      }
    });
  }
}

void EditService::shutdown() {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  queue_cv_.notify_all();
  std::shared_lock lock(models_mutex_);
  for (auto& [name, e] : models_) {
    if (e->worker.joinable()) e->worker.join();
  }
}

}  // namespace paramstyle

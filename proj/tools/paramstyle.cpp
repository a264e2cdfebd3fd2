// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

// paramstyle: batch entry points for every pipeline stage.
//
// Exit codes: 0 success, 1 validation error (bad flags, unknown attribute,
// missing inputs), 2 runtime failure (including fingerprint mismatches).

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "paramstyle/checkpoint.hpp"
#include "paramstyle/convert.hpp"
#include "paramstyle/dataset.hpp"
#include "paramstyle/evaluation.hpp"
#include "paramstyle/filters.hpp"
#include "paramstyle/hash.hpp"
#include "paramstyle/inversion.hpp"
#include "paramstyle/pipeline.hpp"
#include "paramstyle/sampler.hpp"
#include "paramstyle/scene.hpp"
#include "paramstyle/service.hpp"
#include "paramstyle/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace paramstyle;

namespace {

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Every flag a subcommand may use; each subcommand registers the subset it
// understands.
struct Options {
  std::string config;
  std::uint64_t seed = 0;
  int steps = 50;
  double w1 = 7.5;
  double w2 = 3.0;
  double act_t = 0.1;
  std::vector<std::string> lambda;
  std::string out;

  // dataset
  std::vector<std::string> attributes{std::string(kContourWidth), std::string(kBlackpoint)};
  int n_content = 8;
  int k_variants = 3;
  int image_size = 32;

  // training
  std::string data;
  std::string phase = "base";
  int batch = 16;
  double lr = 3e-4;
  double beta = 5.0;
  bool act_free = true;
  int checkpoint_every = 1000;
  int base_channels = 32;
  int time_embed_dim = 128;

  // inference
  std::string bundle;
  std::string adapter;
  int prompt = 0;
  bool trajectory = false;
  std::string inversion;
  std::string image;
  int iterations = 10;
  std::string attribute;
  std::string grid = "0:1:0.1";
  std::string act_grid = "0:1:0.25";
  int seeds = 1;

  // serve
  std::vector<std::string> models;
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Records how an output directory was produced.
struct RunManifest {
  std::string subcommand;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;

  void write(const fs::path& dir) const {
    json in = json::array();
    for (const auto& p : inputs) {
      in.push_back({{"path", fs::absolute(p).string()}, {"git_blob_hash", git_blob_hash_file(p)}});
    }
    json out = json::array();
    for (const auto& p : outputs) out.push_back(fs::absolute(p).string());
    const json j{{"subcommand", subcommand}, {"config", config}, {"seed", seed}, {"inputs", in}, {"outputs", out}};
    write_file_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
  }
};

// Resolved value of every option of `sub` (flags, config file and defaults).
json resolved_config(const CLI::App* sub) {
  json j = json::object();
  for (const auto* opt : sub->get_options()) {
    if (opt->get_name() == "--help") continue;
    auto name = opt->get_single_name();
    const auto& results = opt->results();
    if (opt->get_expected_max() > 1) {
      j[name] = results;
    } else if (!results.empty()) {
      j[name] = results.back();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

// Expands a key=value config file into `--key=value` arguments placed right
// after the subcommand, so flags given on the command line (parsed later,
// last value wins) override it.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::vector<std::string> extra;
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    std::replace(key.begin(), key.end(), '_', '-');
    extra.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

std::map<std::string, float> parse_lambda(const std::vector<std::string>& items,
                                          const std::vector<std::string>& known) {
  std::map<std::string, float> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("--lambda expects name=value, got '" + item + "'");
    const auto name = item.substr(0, eq);
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      std::string list;
      for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
      throw ValidationError("unknown attribute '" + name + "'; known attributes: " + list);
    }
    float v = 0.0f;
    try {
      std::size_t used = 0;
      v = std::stof(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ValidationError("--lambda " + name + ": not a number");
    }
    if (!std::isfinite(v) || v < 0.0f) throw ValidationError("--lambda " + name + " must be >= 0");
    out[name] = v;
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  double lo = 0.0, hi = 0.0, step = 0.0;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0 || hi < lo) {
    throw ValidationError("grid must look like lo:hi:step with step > 0, got '" + text + "'");
  }
  return uniform_grid(lo, hi, step);
}

GuidanceConfig guidance_from(const Options& o) {
  GuidanceConfig g;
  g.w = o.w1;
  g.w1 = o.w1;
  g.w2 = o.w2;
  g.act_t = o.act_t;
  try {
    g.validate();
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }
  return g;
}

StyleModel load_model(const Options& o, RunManifest& m, bool need_adapter) {
  if (need_adapter && o.adapter.empty()) throw ValidationError("--adapter is required");
  auto model = load_bundle(o.bundle);
  m.inputs.push_back(o.bundle);
  if (!o.adapter.empty()) {
    load_adapter(model, o.adapter);
    m.inputs.push_back(o.adapter);
  }
  return model;
}

fs::path out_dir(const Options& o) {
  fs::create_directories(o.out);
  return o.out;
}

std::vector<std::uint64_t> seed_list(const Options& o) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < o.seeds; ++i) s.push_back(o.seed + static_cast<std::uint64_t>(i));
  return s;
}

// ------------------------------------------------------------ subcommands

void cmd_dataset(const Options& o, RunManifest& m) {
  for (const auto& a : o.attributes) {
    if (!is_known_attribute(a)) {
      std::string list;
      for (const auto& k : known_attributes()) list += (list.empty() ? "" : ", ") + k;
      throw ValidationError("unknown attribute '" + a + "'; known attributes: " + list);
    }
  }
  DatasetSpec spec;
  spec.attributes = o.attributes;
  spec.n_content = o.n_content;
  spec.k_variants = o.k_variants;
  spec.seed = o.seed;
  spec.image_size = o.image_size;
  const auto dir = out_dir(o);
  const auto manifest = build_dataset(spec, dir);
  std::cout << "wrote " << manifest.records.size() << " records to " << (dir / "manifest.jsonl").string() << '\n';
  m.outputs.push_back(dir / "manifest.jsonl");
}

TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.steps = o.steps;
  cfg.batch_size = o.batch;
  cfg.lr = o.lr;
  cfg.beta = o.beta;
  cfg.act_free = o.act_free;
  cfg.act_t = o.act_t;
  cfg.seed = o.seed;
  cfg.checkpoint_every = o.checkpoint_every;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }
  return cfg;
}

ProgressFn print_progress(int total) {
  return [total](const LossRecord& r) {
    if (r.step % 100 != 0 && r.step != total) return;
    std::cout << "step " << r.step << '/' << total << " loss " << r.total;
    if (r.reg) std::cout << " reg " << *r.reg;
    std::cout << std::endl;
  };
}

void cmd_train_base(const Options& o, RunManifest& m) {
  const auto phase = phase_from_string(o.phase);
  if (phase == Phase::kAdapter) throw ValidationError("use train-adapter for the adapter phase");
  const auto cfg = train_config(o);
  const auto manifest = load_manifest(o.data);
  m.inputs.push_back(manifest.root / "manifest.jsonl");
  const auto data = load_training_data(manifest);
  StyleModel model{nullptr};
  if (phase == Phase::kBase) {
    DenoiserConfig dc;
    dc.image_size = o.image_size;
    dc.base_channels = o.base_channels;
    dc.time_embed_dim = o.time_embed_dim;
    try {
      dc.validate();
    } catch (const std::exception& e) {
      throw ValidationError(e.what());
    }
    model = make_model(dc, data.attributes, mix_seed(o.seed, 0x1A17));
  } else {
    if (o.bundle.empty()) throw ValidationError("--bundle (the base checkpoint) is required for --phase control");
    model = load_bundle(o.bundle);
    m.inputs.push_back(o.bundle);
    model->init_control_from_base();
  }
  const auto dir = out_dir(o);
  const auto result = train_base(model, data, cfg, phase, dir, print_progress(cfg.steps));
  if (!result.checkpoint.empty()) m.outputs.push_back(result.checkpoint);
  m.outputs.push_back(dir / (to_string(phase) + "_loss.csv"));
  if (result.aborted) throw std::runtime_error("training aborted: " + result.abort_reason);
}

void cmd_train_adapter(const Options& o, RunManifest& m) {
  if (o.bundle.empty()) throw ValidationError("--bundle is required");
  const auto cfg = train_config(o);
  const auto manifest = load_manifest(o.data);
  m.inputs.push_back(manifest.root / "manifest.jsonl");
  const auto data = load_training_data(manifest);
  auto model = load_bundle(o.bundle);
  m.inputs.push_back(o.bundle);
  const auto dir = out_dir(o);
  const auto result = train_adapter(model, data, cfg, dir, print_progress(cfg.steps));
  if (!result.checkpoint.empty()) m.outputs.push_back(result.checkpoint);
  m.outputs.push_back(dir / "adapter_loss.csv");
  if (result.aborted) throw std::runtime_error("training aborted: " + result.abort_reason);
}

void cmd_sample(const Options& o, RunManifest& m) {
  auto model = load_model(o, m, false);
  RenderRequest r;
  r.prompt_id = o.prompt;
  r.seed = o.seed;
  r.steps = o.steps;
  r.guidance = guidance_from(o);
  const auto dir = out_dir(o);
  write_png(render(model, r), dir / "sample.png");
  m.outputs.push_back(dir / "sample.png");
  if (o.trajectory) {
    const auto cond = scene_condition(o.prompt, o.seed, model->config().image_size);
    SampleOptions opts;
    opts.prompt_id = o.prompt;
    opts.hint = edge_to_hint(cond.edges).unsqueeze(0);
    opts.guidance = r.guidance;
    opts.guidance.w = o.w1;
    opts.steps = o.steps;
    opts.keep_trajectory = true;
    if (model->has_adapter()) opts.lambda = StyleParams::zeros(model->attributes());
    const auto result = sample(model, {o.seed}, opts);
    write_trajectory(result, dir / "trajectory.bin", model->config().train_timesteps, o.seed);
    m.outputs.push_back(dir / "trajectory.bin");
  }
}

void cmd_edit(const Options& o, RunManifest& m) {
  auto model = load_model(o, m, true);
  const auto lambda = parse_lambda(o.lambda, model->attributes());
  const auto guidance = guidance_from(o);
  ImageBuffer base, edited;
  if (!o.inversion.empty()) {
    auto record = InversionRecord::load(o.inversion);
    m.inputs.push_back(o.inversion);
    base = render_inverted(model, record, {}, std::nullopt);
    edited = render_inverted(model, record, lambda, guidance);
  } else {
    RenderRequest r;
    r.prompt_id = o.prompt;
    r.seed = o.seed;
    r.steps = o.steps;
    r.guidance = guidance;
    base = render(model, r);
    r.lambda = lambda;
    edited = render(model, r);
  }
  const auto dir = out_dir(o);
  write_png(edited, dir / "edit.png");
  const json meta{{"lambda", lambda},
                  {"w2", guidance.w2},
                  {"act_t", guidance.act_t},
                  {"distance_to_base", perceptual_distance(quantize8(edited), quantize8(base))}};
  write_file_atomic(dir / "edit.json", meta.dump(2) + "\n");
  m.outputs.push_back(dir / "edit.png");
  m.outputs.push_back(dir / "edit.json");
  std::cout << "distance to base " << meta["distance_to_base"].get<double>() << '\n';
}

void cmd_invert(const Options& o, RunManifest& m) {
  auto model = load_model(o, m, true);
  const auto image = read_png(o.image);
  m.inputs.push_back(o.image);
  if (image.width != model->config().image_size || image.height != model->config().image_size) {
    throw ValidationError("image must be " + std::to_string(model->config().image_size) + " pixels square");
  }
  InversionConfig cfg;
  cfg.steps = o.steps;
  cfg.iterations = o.iterations;
  cfg.prompt_id = o.prompt;
  cfg.guidance = guidance_from(o);
  const auto rgb = image.channels == 3 ? image : gray_to_rgb(to_gray(image));
  const auto record = invert(model, rgb, cfg);
  const auto recon = latent_to_image(record.reconstruction);
  const auto dir = out_dir(o);
  record.save(dir / "inversion.json");
  write_png(recon, dir / "reconstruction.png");
  const double db = psnr(quantize8(recon), quantize8(rgb));
  const json metrics{{"psnr", db},
                     {"initial_objective", record.initial_objective},
                     {"final_objective", record.final_objective},
                     {"final_lr", record.final_lr}};
  write_file_atomic(dir / "inversion_metrics.json", metrics.dump(2) + "\n");
  m.outputs.insert(m.outputs.end(),
                   {dir / "inversion.json", dir / "reconstruction.png", dir / "inversion_metrics.json"});
  std::cout << "reconstruction PSNR " << db << " dB\n";
}

EvalSetup eval_setup(const Options& o) {
  if (o.seeds < 1) throw ValidationError("--seeds must be >= 1");
  EvalSetup setup;
  setup.seeds = seed_list(o);
  setup.guidance = guidance_from(o);
  setup.steps = o.steps;
  return setup;
}

void check_attribute(const StyleModel& model, const std::string& name) {
  const auto& known = model->attributes();
  if (std::find(known.begin(), known.end(), name) != known.end()) return;
  std::string list;
  for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
  throw ValidationError("unknown attribute '" + name + "'; known attributes: " + list);
}

json report_summary(StyleModel& model, const Options& o) {
  return json{{"distance", "pyramid L1 perceptual proxy"},
              {"fingerprint", model->frozen_fingerprint()},
              {"bundle", o.bundle},
              {"adapter", o.adapter},
              {"seed", o.seed},
              {"guidance", guidance_from(o).to_json()},
              {"steps", o.steps}};
}

void cmd_sweep(const Options& o, RunManifest& m) {
  auto model = load_model(o, m, true);
  check_attribute(model, o.attribute);
  const auto grid = parse_grid(o.grid);
  const auto result = sweep(model, eval_setup(o), o.attribute, grid);
  const auto dir = out_dir(o);
  write_report(dir, {result}, {}, report_summary(model, o));
  m.outputs.insert(m.outputs.end(), {dir / ("sweep_" + o.attribute + ".csv"),
                                     dir / ("sweep_" + o.attribute + ".png"), dir / "summary.json"});
  std::cout << "smoothness " << result.smoothness << '\n';
}

void cmd_heatmap(const Options& o, RunManifest& m) {
  auto model = load_model(o, m, true);
  check_attribute(model, o.attribute);
  const auto result = heatmap(model, eval_setup(o), o.attribute, parse_grid(o.act_grid), parse_grid(o.grid));
  const auto dir = out_dir(o);
  write_report(dir, {}, {result}, report_summary(model, o));
  m.outputs.insert(m.outputs.end(), {dir / ("heatmap_" + o.attribute + ".csv"),
                                     dir / ("heatmap_" + o.attribute + ".png"), dir / "summary.json"});
}

httplib::Server* g_server = nullptr;

void cmd_serve(const Options& o) {
  if (o.models.empty()) throw ValidationError("at least one --model name=bundle[,adapter] is required");
  EditService service;
  for (const auto& text : o.models) {
    ModelSpec spec;
    try {
      spec = parse_model_spec(text);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    service.add_model(spec);
    std::cout << "loaded model " << spec.name << " from " << spec.bundle.string() << '\n';
  }
  httplib::Server server;
  service.install_routes(server);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cout << "listening on http://" << o.host << ':' << o.port << std::endl;
  if (!server.listen(o.host, o.port)) throw std::runtime_error("cannot listen on " + o.host + ":" + std::to_string(o.port));
  g_server = nullptr;
  service.shutdown();
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"paramstyle: parametric style editing on a toy diffusion model"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value file; flags override its values");
    sub->add_option("--seed", o.seed, "seed for all randomness");
    sub->add_option("--out", o.out, "output directory")->required();
  };
  const auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--bundle", o.bundle, "model bundle checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--adapter", o.adapter, "style adapter checkpoint")->check(CLI::ExistingFile);
  };
  const auto guidance_opts = [&](CLI::App* sub, bool effect) {
    sub->add_option("--steps", o.steps, "DDIM steps")->check(CLI::Range(1, 1000));
    sub->add_option("--w1", o.w1, "prompt guidance weight");
    if (effect) {
      sub->add_option("--w2", o.w2, "effect guidance weight");
      sub->add_option("--act-t", o.act_t, "effect activation threshold")->check(CLI::Range(0.0, 1.0));
    }
  };

  auto* dataset = app.add_subcommand("dataset", "render the paired synthetic dataset");
  common(dataset);
  dataset->add_option("--attributes", o.attributes, "style attributes")->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  dataset->add_option("--n-content", o.n_content, "content images")->check(CLI::PositiveNumber);
  dataset->add_option("--k-variants", o.k_variants, "stylized variants per content image")
      ->check(CLI::NonNegativeNumber);
  dataset->add_option("--image-size", o.image_size, "resolution")->check(CLI::PositiveNumber);

  const auto train_opts = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--data", o.data, "dataset directory")->required()->check(CLI::ExistingPath);
    sub->add_option("--steps", o.steps, "optimizer steps")->check(CLI::PositiveNumber);
    sub->add_option("--batch", o.batch, "batch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr", o.lr, "learning rate");
    sub->add_option("--checkpoint-every", o.checkpoint_every, "steps between checkpoints (0: end only)");
  };
  auto* train_base_cmd = app.add_subcommand("train-base", "train the base denoiser or its control branch");
  train_opts(train_base_cmd);
  train_base_cmd->add_option("--phase", o.phase, "base | control")->check(CLI::IsMember({"base", "control"}));
  train_base_cmd->add_option("--bundle", o.bundle, "base checkpoint (control phase)")->check(CLI::ExistingFile);
  train_base_cmd->add_option("--base-channels", o.base_channels, "U-Net width")->check(CLI::PositiveNumber);
  train_base_cmd->add_option("--time-embed-dim", o.time_embed_dim, "timestep embedding width")
      ->check(CLI::PositiveNumber);
  train_base_cmd->add_option("--image-size", o.image_size, "resolution")->check(CLI::PositiveNumber);

  auto* train_adapter_cmd = app.add_subcommand("train-adapter", "fine-tune the style adapter");
  train_opts(train_adapter_cmd);
  train_adapter_cmd->add_option("--bundle", o.bundle, "trained bundle (base + control)")
      ->required()->check(CLI::ExistingFile);
  train_adapter_cmd->add_option("--beta", o.beta, "regularization strength")->check(CLI::NonNegativeNumber);
  train_adapter_cmd->add_option("--act-free", o.act_free, "train on all timesteps (false: only t >= act_t)");
  train_adapter_cmd->add_option("--act-t", o.act_t, "activation threshold when --act-free=false")
      ->check(CLI::Range(0.0, 1.0));

  auto* sample_cmd = app.add_subcommand("sample", "generate from a seed without style edits");
  common(sample_cmd);
  model_opts(sample_cmd);
  guidance_opts(sample_cmd, false);
  sample_cmd->add_option("--prompt", o.prompt, "prompt id")->check(CLI::Range(0, kPromptVocabularySize - 1));
  sample_cmd->add_flag("--trajectory", o.trajectory, "also dump the latent trajectory");

  auto* edit_cmd = app.add_subcommand("edit", "effect-guided edit of a seed or an inverted image");
  common(edit_cmd);
  model_opts(edit_cmd);
  guidance_opts(edit_cmd, true);
  edit_cmd->add_option("--prompt", o.prompt, "prompt id")->check(CLI::Range(0, kPromptVocabularySize - 1));
  edit_cmd->add_option("--lambda", o.lambda, "attribute strength name=value (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  edit_cmd->add_option("--inversion", o.inversion, "inversion record from `invert`")->check(CLI::ExistingFile);

  auto* invert_cmd = app.add_subcommand("invert", "invert an image for editing");
  common(invert_cmd);
  model_opts(invert_cmd);
  guidance_opts(invert_cmd, true);
  invert_cmd->add_option("--image", o.image, "PNG to invert")->required()->check(CLI::ExistingFile);
  invert_cmd->add_option("--prompt", o.prompt, "prompt id (-1: none)")
      ->check(CLI::Range(-1, kPromptVocabularySize - 1));
  invert_cmd->add_option("--iterations", o.iterations, "optimizer iterations per step")
      ->check(CLI::Range(0, 1000));

  auto* sweep_cmd = app.add_subcommand("sweep", "distance-vs-strength sweep of one attribute");
  common(sweep_cmd);
  model_opts(sweep_cmd);
  guidance_opts(sweep_cmd, true);
  sweep_cmd->add_option("--attribute", o.attribute, "attribute to sweep")->required();
  sweep_cmd->add_option("--grid", o.grid, "lambda grid lo:hi:step");
  sweep_cmd->add_option("--seeds", o.seeds, "number of consecutive seeds starting at --seed");

  auto* heatmap_cmd = app.add_subcommand("heatmap", "distance over (act_t, lambda)");
  common(heatmap_cmd);
  model_opts(heatmap_cmd);
  guidance_opts(heatmap_cmd, true);
  heatmap_cmd->add_option("--attribute", o.attribute, "attribute")->required();
  heatmap_cmd->add_option("--grid", o.grid, "lambda grid lo:hi:step");
  heatmap_cmd->add_option("--act-grid", o.act_grid, "act_t grid lo:hi:step");
  heatmap_cmd->add_option("--seeds", o.seeds, "number of consecutive seeds starting at --seed");

  auto* serve_cmd = app.add_subcommand("serve", "run the editing HTTP service");
  serve_cmd->add_option("--config", o.config, "key = value file; flags override its values");
  serve_cmd->add_option("--model", o.models, "name=bundle.ckpt[,adapter.ckpt] (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  serve_cmd->add_option("--host", o.host, "bind address");
  serve_cmd->add_option("--port", o.port, "port")->check(CLI::Range(1, 65535));

  try {
    const auto args = expand_config(argc, argv);
    std::vector<char*> cargs;
    for (const auto& a : args) cargs.push_back(const_cast<char*>(a.c_str()));
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if ((name == "train-base" || name == "train-adapter") && sub->count("--steps") == 0) o.steps = 1000;
  if (name == "train-adapter" && sub->count("--batch") == 0) o.batch = 8;
  if (name == "train-adapter" && sub->count("--lr") == 0) o.lr = 1e-4;

  RunManifest manifest;
  manifest.subcommand = name;
  manifest.seed = o.seed;
  try {
    if (name == "dataset") cmd_dataset(o, manifest);
    else if (name == "train-base") cmd_train_base(o, manifest);
    else if (name == "train-adapter") cmd_train_adapter(o, manifest);
    else if (name == "sample") cmd_sample(o, manifest);
    else if (name == "edit") cmd_edit(o, manifest);
    else if (name == "invert") cmd_invert(o, manifest);
    else if (name == "sweep") cmd_sweep(o, manifest);
    else if (name == "heatmap") cmd_heatmap(o, manifest);
    else if (name == "serve") {
      cmd_serve(o);
      return 0;
    }
    manifest.config = resolved_config(sub);
    if (name == "train-base" || name == "train-adapter") {
      manifest.config["steps"] = std::to_string(o.steps);
      manifest.config["batch"] = std::to_string(o.batch);
      manifest.config["lr"] = std::to_string(o.lr);
    }
    manifest.write(o.out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

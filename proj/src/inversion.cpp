// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "paramstyle/checkpoint.hpp"
#include "paramstyle/convert.hpp"
#include "paramstyle/filters.hpp"
#include "paramstyle/hash.hpp"
#include "paramstyle/schedule.hpp"

namespace paramstyle {

using json = nlohmann::json;

void InversionConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("inversion: steps must be >= 1");
  if (iterations < 0) throw std::invalid_argument("inversion: iterations must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("inversion: lr must be > 0");
  guidance.validate();
}

json InversionConfig::to_json() const {
  return {{"steps", steps}, {"iterations", iterations}, {"lr", lr},
          {"prompt_id", prompt_id}, {"guidance", guidance.to_json()}};
}

InversionConfig InversionConfig::from_json(const json& j) {
  InversionConfig c;
  c.steps = j.value("steps", c.steps);
  c.iterations = j.value("iterations", c.iterations);
  c.lr = j.value("lr", c.lr);
  c.prompt_id = j.value("prompt_id", c.prompt_id);
  if (j.contains("guidance")) c.guidance = GuidanceConfig::from_json(j.at("guidance"));
  c.validate();
  return c;
}

namespace {

json tensor_to_json(const torch::Tensor& t) {
  const auto v = t.detach().to(torch::kFloat).contiguous();
  const auto* p = v.data_ptr<float>();
  return {{"shape", v.sizes().vec()}, {"data", std::vector<float>(p, p + v.numel())}};
}

torch::Tensor tensor_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
  auto data = j.at("data").get<std::vector<float>>();
  std::int64_t numel = 1;
  for (auto d : shape) numel *= d;
  if (numel != static_cast<std::int64_t>(data.size())) throw InversionError("tensor size mismatch in record");
  return torch::from_blob(data.data(), shape, torch::kFloat).clone();
}

}  // namespace

json InversionRecord::to_json() const {
  json tokens = json::array();
  for (const auto& t : null_tokens) tokens.push_back(tensor_to_json(t));
  return {{"image_hash", image_hash},
          {"config", config.to_json()},
          {"z_T", tensor_to_json(z_T)},
          {"hint", tensor_to_json(hint)},
          {"null_tokens", tokens},
          {"initial_objective", initial_objective},
          {"final_objective", final_objective},
          {"final_lr", final_lr}};
}

InversionRecord InversionRecord::from_json(const json& j) {
  InversionRecord r;
  r.image_hash = j.at("image_hash").get<std::string>();
  r.config = InversionConfig::from_json(j.at("config"));
  r.z_T = tensor_from_json(j.at("z_T"));
  r.hint = tensor_from_json(j.at("hint"));
  for (const auto& t : j.at("null_tokens")) r.null_tokens.push_back(tensor_from_json(t));
  r.initial_objective = j.at("initial_objective").get<std::vector<double>>();
  r.final_objective = j.at("final_objective").get<std::vector<double>>();
  r.final_lr = j.value("final_lr", 0.0);
  if (static_cast<int>(r.null_tokens.size()) != r.config.steps) {
    throw InversionError("record holds " + std::to_string(r.null_tokens.size()) +
                         " null-parameter embeddings for " + std::to_string(r.config.steps) + " steps");
  }
  return r;
}

void InversionRecord::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump());
}

InversionRecord InversionRecord::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InversionError("cannot open inversion record " + path.string());
  return from_json(json::parse(f));
}

std::string inversion_key(const ImageBuffer& image, const InversionConfig& cfg) {
  image.validate();
  Sha256 h;
  h.update(std::to_string(image.width) + "x" + std::to_string(image.height) + "x" +
           std::to_string(image.channels) + ";");
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(image.data[i] * 255.0f));
  }
  h.update(std::span<const std::uint8_t>(bytes));
  h.update(cfg.to_json().dump());
  return h.hex_digest();
}

std::vector<torch::Tensor> ddim_inversion(StyleModel& model, const torch::Tensor& z0,
                                          const torch::Tensor& hint, int prompt_id, int steps) {
  torch::NoGradGuard no_grad;
  const auto& schedule = model->schedule();
  const auto ts = ddim_timesteps(schedule.steps(), steps);  // descending
  const auto batch = z0.size(0);
  const auto ctx = model->context(std::vector<int>(static_cast<std::size_t>(batch), prompt_id));
  std::vector<torch::Tensor> states{z0.to(torch::kFloat)};
  auto z = states.back();
  for (int i = steps - 1; i >= 0; --i) {
    const int t = ts[static_cast<std::size_t>(i)];
    const int t_prev = i + 1 < steps ? ts[static_cast<std::size_t>(i + 1)] : -1;
    const auto tvec = timestep_batch(t, batch);
    const auto features = model->control_features(hint, z, tvec, ctx);
    const auto eps = model->denoise_base(z, tvec, ctx, &features);
    z = ddim_invert_step(z, eps, t_prev, t, schedule);
    states.push_back(z);
  }
  std::reverse(states.begin(), states.end());
  return states;
}

void optimize_null_param(StyleModel& model, const std::vector<torch::Tensor>& targets,
                         InversionRecord& record) {
  const auto& cfg = record.config;
  cfg.validate();
  if (static_cast<int>(targets.size()) != cfg.steps + 1) {
    throw std::invalid_argument("optimize_null_param: need steps + 1 target states");
  }
  const auto& schedule = model->schedule();
  const auto ts = ddim_timesteps(schedule.steps(), cfg.steps);
  const double w1 = cfg.guidance.w1;

  SampleOptions opts;
  opts.prompt_id = cfg.prompt_id;
  opts.hint = record.hint;
  opts.lambda = StyleParams::zeros(model->attributes());
  opts.guidance = cfg.guidance;
  opts.steps = cfg.steps;

  torch::Tensor zero_tokens;
  {
    torch::NoGradGuard no_grad;
    zero_tokens = model->embed_lambda(std::vector<StyleParams>{*opts.lambda}).detach();
  }
  record.z_T = targets.front().clone();
  record.null_tokens.clear();
  record.initial_objective.clear();
  record.final_objective.clear();

  double lr = cfg.lr;
  int increases = 0;
  bool halved = false;
  auto tokens = zero_tokens.clone();
  auto z = record.z_T.clone();
  const auto null_ctx = model->context({-1}).detach();
  const auto cond_ctx = model->context({cfg.prompt_id}).detach();

  for (int i = 0; i < cfg.steps; ++i) {
    const int t = ts[static_cast<std::size_t>(i)];
    const int t_prev = i + 1 < cfg.steps ? ts[static_cast<std::size_t>(i + 1)] : -1;
    const double t_norm = progress_at(i, cfg.steps);
    const double w2 = effective_w2(cfg.guidance, t_norm);
    const auto& target = targets[static_cast<std::size_t>(i + 1)];
    const auto tvec = timestep_batch(t, 1);

    // Everything except eps_A(null tokens) is constant within a step.
    torch::Tensor base_eps, eps_a0;
    {
      torch::NoGradGuard no_grad;
      const auto features = model->control_features(record.hint, z, tvec, cond_ctx).repeat(2);
      const auto eps2 = model->denoise_base(torch::cat({z, z}), torch::cat({tvec, tvec}),
                                            torch::cat({null_ctx, cond_ctx}), &features);
      const auto eps_u = eps2.slice(0, 0, 1);
      const auto eps_c = eps2.slice(0, 1);
      base_eps = eps_u + (eps_c - eps_u) * w1;
      if (w2 != 0.0) eps_a0 = model->adapter_forward(z, tvec, record.hint, zero_tokens, null_ctx);
    }
    const auto t_t = torch::tensor({static_cast<std::int64_t>(t)});
    const auto t_p = torch::tensor({static_cast<std::int64_t>(t_prev)});
    auto objective = [&](const torch::Tensor& tok) {
      torch::Tensor eps = base_eps;
      if (w2 != 0.0) {
        const auto eps_a = model->adapter_forward(z, tvec, record.hint, tok, null_ctx);
        eps = eps + (eps_a0 - eps_a) * w2;
      }
      return (target - ddim_step(z, eps, t_t, t_p, schedule)).pow(2).mean();
    };

    double initial;
    {
      torch::NoGradGuard no_grad;
      initial = objective(tokens).item<double>();
    }
    double best = initial;
    auto best_tokens = tokens.clone();
    if (w2 != 0.0 && cfg.iterations > 0) {
      auto param = tokens.clone().requires_grad_(true);
      torch::optim::Adam opt({param}, torch::optim::AdamOptions(lr));
      double previous = initial;
      for (int it = 0; it < cfg.iterations; ++it) {
        opt.zero_grad();
        const auto loss = objective(param);
        loss.backward();
        const double value = loss.item<double>();
        if (!std::isfinite(value)) throw InversionError("non-finite inversion objective at step " + std::to_string(i));
        if (value < best) {
          best = value;
          best_tokens = param.detach().clone();
        }
        if (it > 0 && value > previous) {
          if (++increases >= 3 * cfg.iterations) {
            if (halved) throw InversionError("inversion objective kept increasing after halving the lr");
            halved = true;
            increases = 0;
            lr *= 0.5;
            for (auto& group : opt.param_groups()) {
              static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
            }
          }
        } else if (it > 0) {
          increases = 0;
        }
        previous = value;
        opt.step();
      }
      // The last update has not been scored yet.
      torch::NoGradGuard no_grad;
      const double value = objective(param).item<double>();
      if (value < best) {
        best = value;
        best_tokens = param.detach().clone();
      }
    }
    record.initial_objective.push_back(initial);
    record.final_objective.push_back(best);
    record.null_tokens.push_back(best_tokens);
    tokens = best_tokens;

    // Advance along the exact path edit_inverted replays.
    torch::NoGradGuard no_grad;
    const auto eps = guided_eps(model, z, t, opts, t_norm, best_tokens);
    z = ddim_step(z, eps, t, t_prev, schedule);
  }
  record.final_lr = lr;
  record.reconstruction = z;
}

InversionRecord invert(StyleModel& model, const ImageBuffer& image, const InversionConfig& cfg) {
  cfg.validate();
  if (!model->has_adapter()) throw std::invalid_argument("invert: model has no adapter");
  const auto& mc = model->config();
  if (image.width != mc.image_size || image.height != mc.image_size || image.channels != mc.in_channels) {
    throw std::invalid_argument("invert: image must be " + std::to_string(mc.image_size) + "x" +
                                std::to_string(mc.image_size) + " RGB");
  }
  InversionRecord record;
  record.config = cfg;
  record.image_hash = inversion_key(image, cfg);
  record.hint = edge_to_hint(edge_map(image)).unsqueeze(0);
  const auto z0 = image_to_latent(image).unsqueeze(0);
  const auto targets = ddim_inversion(model, z0, record.hint, cfg.prompt_id, cfg.steps);
  optimize_null_param(model, targets, record);
  return record;
}

SampleResult edit_inverted(StyleModel& model, const InversionRecord& record, const StyleParams& lambda,
                           std::optional<GuidanceConfig> guidance) {
  SampleOptions opts;
  opts.prompt_id = record.config.prompt_id;
  opts.hint = record.hint;
  opts.lambda = lambda;
  opts.guidance = guidance.value_or(record.config.guidance);
  opts.steps = record.config.steps;
  opts.z_T = record.z_T;
  opts.null_param_tokens = record.null_tokens;
  return sample(model, {0}, opts);
}

}  // namespace paramstyle

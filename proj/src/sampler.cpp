// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/sampler.hpp"

#include <fstream>

#include "json.hpp"
#include "paramstyle/checkpoint.hpp"
#include "paramstyle/schedule.hpp"

namespace paramstyle {

torch::Tensor initial_noise(const std::vector<std::uint64_t>& seeds, const DenoiserConfig& cfg) {
  if (seeds.empty()) throw std::invalid_argument("sample: at least one seed is required");
  std::vector<torch::Tensor> rows;
  rows.reserve(seeds.size());
  for (const auto seed : seeds) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    rows.push_back(torch::randn({cfg.in_channels, cfg.image_size, cfg.image_size}, gen,
                                torch::TensorOptions().dtype(torch::kFloat)));
  }
  return torch::stack(rows);
}

double progress_at(int step_index, int steps) {
  return static_cast<double>(step_index) / static_cast<double>(steps);
}

namespace {

torch::Tensor expand_batch(const torch::Tensor& x, std::int64_t batch, const char* what) {
  if (x.size(0) == batch) return x;
  if (x.size(0) == 1) {
    std::vector<std::int64_t> reps(static_cast<std::size_t>(x.dim()), 1);
    reps[0] = batch;
    return x.repeat(reps);
  }
  throw std::invalid_argument(std::string("sample: ") + what + " batch does not match the latents");
}

}  // namespace

torch::Tensor guided_eps(StyleModel& model, const torch::Tensor& z, int t, const SampleOptions& opts,
                         double t_norm, const torch::Tensor& null_tokens) {
  const auto batch = z.size(0);
  const auto tvec = timestep_batch(t, batch);
  const auto null_ctx = model->context(std::vector<int>(static_cast<std::size_t>(batch), -1));
  std::vector<int> ids = opts.prompt_ids;
  if (ids.empty()) ids.assign(static_cast<std::size_t>(batch), opts.prompt_id);
  if (static_cast<std::int64_t>(ids.size()) != batch) {
    throw std::invalid_argument("sample: one prompt id per row expected");
  }
  const auto cond_ctx = model->context(ids);
  const auto z2 = torch::cat({z, z});
  const auto t2 = torch::cat({tvec, tvec});
  const bool prompt_edit = !opts.lambda && opts.edit_scale != 0.0;
  std::vector<torch::Tensor> branches{null_ctx, cond_ctx};
  if (prompt_edit) {
    std::vector<int> edit_ids = opts.edit_prompt_ids;
    if (edit_ids.size() == 1) edit_ids.assign(static_cast<std::size_t>(batch), edit_ids.front());
    if (static_cast<std::int64_t>(edit_ids.size()) != batch) {
      throw std::invalid_argument("sample: prompt edit needs one edit prompt per row");
    }
    branches.push_back(model->context(edit_ids));
  }
  const auto n_branches = static_cast<int>(branches.size());
  const auto zn = z.repeat({n_branches, 1, 1, 1});
  const auto tn = tvec.repeat({n_branches});
  const auto ctxn = torch::cat(branches);

  torch::Tensor hint;
  torch::Tensor eps_all;
  if (opts.hint.defined()) {
    hint = expand_batch(opts.hint, batch, "hint");
    // All base predictions see the same prompt-conditioned control residuals.
    const auto features = model->control_features(hint, z, tvec, cond_ctx).repeat(n_branches);
    eps_all = model->denoise_base(zn, tn, ctxn, &features);
  } else {
    eps_all = model->denoise_base(zn, tn, ctxn);
  }
  const auto eps_u = eps_all.slice(0, 0, batch);
  const auto eps_c = eps_all.slice(0, batch, 2 * batch);

  if (prompt_edit) {
    const auto eps_e = eps_all.slice(0, 2 * batch);
    return compose_cfg(eps_u, eps_c, opts.guidance.w) + (eps_e - eps_c) * opts.edit_scale;
  }
  if (!opts.lambda) return compose_cfg(eps_u, eps_c, opts.guidance.w);
  if (!hint.defined()) throw std::invalid_argument("sample: effect guidance requires an edge map");

  torch::Tensor g_a;
  const double w2 = effective_w2(opts.guidance, t_norm);
  // A zero lambda against the plain lambda = 0 tokens gives g_A = 0 exactly;
  // skip the adapter evaluation in that case.
  if (w2 != 0.0 && (!opts.lambda->all_zero() || null_tokens.defined())) {
    const auto tok_k = expand_batch(model->embed_lambda(std::vector<StyleParams>{*opts.lambda}), batch, "lambda");
    const auto tok_0 = null_tokens.defined()
                           ? expand_batch(null_tokens, batch, "null tokens")
                           : expand_batch(model->embed_lambda(std::vector<StyleParams>{
                                              StyleParams::zeros(model->attributes())}),
                                          batch, "lambda");
    const auto eps_a = model->adapter_forward(z2, t2, torch::cat({hint, hint}), torch::cat({tok_k, tok_0}),
                                              torch::cat({null_ctx, null_ctx}));
    g_a = effect_guidance(eps_a.slice(0, 0, batch), eps_a.slice(0, batch));
  }
  return compose_full(eps_u, eps_c - eps_u, g_a, opts.guidance, t_norm);
}

SampleResult sample(StyleModel& model, const std::vector<std::uint64_t>& seeds, const SampleOptions& opts) {
  opts.guidance.validate();
  const auto& cfg = model->config();
  const auto& schedule = model->schedule();
  if (opts.prompt_id < -1 || opts.prompt_id >= cfg.num_prompts) {
    throw std::invalid_argument("sample: prompt id out of range");
  }
  for (int id : opts.prompt_ids) {
    if (id < -1 || id >= cfg.num_prompts) throw std::invalid_argument("sample: prompt id out of range");
  }
  if (opts.lambda && !model->has_adapter()) throw std::invalid_argument("sample: model has no adapter");
  if (!opts.null_param_tokens.empty() &&
      static_cast<int>(opts.null_param_tokens.size()) != opts.steps) {
    throw std::invalid_argument("sample: need one null-parameter embedding per step");
  }
  torch::NoGradGuard no_grad;
  SampleResult result;
  result.timesteps = ddim_timesteps(schedule.steps(), opts.steps);
  auto z = opts.z_T.defined() ? opts.z_T.to(torch::kFloat).clone() : initial_noise(seeds, cfg);
  if (opts.keep_trajectory) result.trajectory.push_back(z.clone());
  for (int i = 0; i < opts.steps; ++i) {
    const int t = result.timesteps[static_cast<std::size_t>(i)];
    const int t_prev = i + 1 < opts.steps ? result.timesteps[static_cast<std::size_t>(i + 1)] : -1;
    const auto null_tokens =
        opts.null_param_tokens.empty() ? torch::Tensor() : opts.null_param_tokens[static_cast<std::size_t>(i)];
    const auto eps = guided_eps(model, z, t, opts, progress_at(i, opts.steps), null_tokens);
    if (!torch::isfinite(eps).all().item<bool>()) {
      throw SamplingError("non-finite noise prediction at step " + std::to_string(i) + " (t=" +
                          std::to_string(t) + ")");
    }
    z = ddim_step(z, eps, t, t_prev, schedule);
    if (opts.keep_trajectory) result.trajectory.push_back(z.clone());
  }
  result.latents = z;
  return result;
}

void write_trajectory(const SampleResult& result, const std::filesystem::path& path, int T,
                      std::uint64_t seed) {
  if (result.trajectory.empty()) throw std::invalid_argument("trajectory was not recorded");
  const auto shape = result.trajectory.front().sizes().vec();
  const nlohmann::json header{{"T", T},
                              {"steps", static_cast<int>(result.trajectory.size()) - 1},
                              {"shape", shape},
                              {"seed", seed},
                              {"timesteps", result.timesteps},
                              {"dtype", "float32"}};
  const std::string text = header.dump();
  std::string bytes;
  const auto n = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  bytes += text;
  for (const auto& state : result.trajectory) {
    const auto v = state.detach().to(torch::kFloat).contiguous();
    bytes.append(static_cast<const char*>(v.data_ptr()), static_cast<std::size_t>(v.numel()) * sizeof(float));
  }
  write_file_atomic(path, bytes);
}

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference gradient checks for the training losses, run in
// float64 on a micro model.

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "paramstyle/model.hpp"
#include "paramstyle/training.hpp"
#include "test_support.hpp"

namespace paramstyle::testing {

struct GradCheckResult {
  int tensors = 0;
  int probes = 0;
  double worst_rel = 0.0;
  std::string worst_name;
  double largest_derivative = 0.0;
};

// For every parameter tensor, compares the analytic directional derivative
// with (L(p + h d) - L(p - h d)) / 2h along two directions: the unit
// gradient direction of that tensor and the coordinate with the largest
// gradient. Directions along which the derivative nearly cancels would only
// measure the O(h^2) truncation error, so they are not probed. Relative error
// is |a - n| / max(|a|, |n|); pairs where both are below `floor` count as
// agreeing.
inline GradCheckResult check_gradients(const std::vector<std::pair<std::string, torch::Tensor>>& params,
                                       const std::function<torch::Tensor()>& loss_fn, double h,
                                       double floor = 1e-14) {
  for (const auto& [name, p] : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss_fn().backward();
  std::vector<torch::Tensor> grads;
  for (const auto& [name, p] : params) {
    grads.push_back(p.grad().defined() ? p.grad().detach().clone() : torch::zeros_like(p));
  }

  torch::NoGradGuard no_grad;
  GradCheckResult result;
  const auto probe = [&](const std::string& label, torch::Tensor p, const torch::Tensor& dir,
                         double analytic) {
    const auto saved = p.detach().clone();
    p.add_(dir * h);
    const double up = loss_fn().item<double>();
    p.copy_(saved);
    p.sub_(dir * h);
    const double down = loss_fn().item<double>();
    p.copy_(saved);
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
    result.largest_derivative = std::max(result.largest_derivative, scale);
    const double rel = scale < floor ? 0.0 : std::fabs(analytic - numeric) / scale;
    ++result.probes;
    if (rel > result.worst_rel) {
      result.worst_rel = rel;
      result.worst_name = label;
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].second;
    const auto& g = grads[i];
    const double norm = g.norm().item<double>();
    if (norm > 0) probe(params[i].first + " (gradient direction)", p, g / norm, norm);
    const auto flat = g.reshape({-1});
    const auto k = flat.abs().argmax().item<std::int64_t>();
    auto unit = torch::zeros_like(flat);
    unit[k] = 1.0;
    probe(params[i].first + "[" + std::to_string(k) + "]", p, unit.view(p.sizes()),
          flat[k].item<double>());
    ++result.tensors;
  }
  return result;
}

inline std::vector<std::pair<std::string, torch::Tensor>> trainable_named(StyleModel& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : model->named_parameters()) {
    if (p.value().requires_grad()) out.emplace_back(p.key(), p.value());
  }
  return out;
}

// A fixed float64 paired batch for the micro model: two samples, nonzero
// strengths and distinct timesteps.
inline PairedBatch micro_pair(const DenoiserConfig& cfg, int n_attributes, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto opts = torch::TensorOptions().dtype(torch::kDouble);
  const std::int64_t s = cfg.image_size;
  PairedBatch pair;
  pair.z0_k = torch::rand({2, 3, s, s}, gen, opts) * 2 - 1;
  pair.z0_0 = torch::rand({2, 3, s, s}, gen, opts) * 2 - 1;
  pair.eps = torch::randn({2, 3, s, s}, gen, opts);
  pair.t = torch::tensor({37, 512}, torch::kLong);
  pair.lambda = torch::rand({2, n_attributes}, gen, opts) * 0.8 + 0.1;
  pair.edge = (torch::rand({2, 1, s, s}, gen, opts) > 0.6).to(torch::kDouble);
  pair.prompt_ids = {1, 4};
  return pair;
}

// Micro model in float64 with every zero-initialized projection perturbed so
// that all parameters reach the loss.
inline StyleModel micro_double_model(std::uint64_t seed) {
  auto model = make_model(micro_config(4), two_attributes(), seed);
  perturb_zero_init(model, seed + 1);
  model->to(torch::kDouble);
  return model;
}

struct LossGradChecks {
  GradCheckResult base;     // Eq. 1 term, denoiser + prompts
  GradCheckResult control;  // Eq. 1 term through the control branch
  GradCheckResult adapter;  // Eq. 1 term through the adapter
  GradCheckResult reg;      // regularizer alone, adapter parameters
};

inline LossGradChecks run_loss_grad_checks(double h, std::uint64_t seed) {
  auto model = micro_double_model(seed);
  const auto pair = micro_pair(model->config(), 2, seed + 2);
  LossGradChecks out;

  const auto eq1 = [&](bool with_control) {
    const auto z_t = add_noise(pair.z0_k, pair.eps, pair.t, model->schedule());
    const auto ctx = model->context(pair.prompt_ids);
    if (!with_control) return diffusion_loss(pair.eps, model->denoise_base(z_t, pair.t, ctx));
    const auto feats = model->control_features(pair.edge, z_t, pair.t, ctx);
    return diffusion_loss(pair.eps, model->denoise_base(z_t, pair.t, ctx, &feats));
  };

  model->set_trainable(Phase::kBase);
  out.base = check_gradients(trainable_named(model), [&] { return eq1(false); }, h);
  model->set_trainable(Phase::kControl);
  out.control = check_gradients(trainable_named(model), [&] { return eq1(true); }, h);
  model->set_trainable(Phase::kAdapter);
  out.adapter = check_gradients(trainable_named(model),
                                [&] { return adapter_loss(model, pair, 0.0).total; }, h);
  out.reg = check_gradients(trainable_named(model), [&] { return reg_loss(model, pair); }, h);
  return out;
}

}  // namespace paramstyle::testing

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include "json.hpp"

namespace paramstyle {

// Guidance scales. w is the plain classifier-free scale used when no effect
// guidance is composed; w1 scales prompt guidance and w2 effect guidance.
// Effect guidance stays off while the normalized denoising progress is
// below act_t.
struct GuidanceConfig {
  double w = 7.5;
  double w1 = 7.5;
  double w2 = 3.0;
  double act_t = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static GuidanceConfig from_json(const nlohmann::json& j);
};

// eps_uncond + w (eps_cond - eps_uncond)
torch::Tensor compose_cfg(const torch::Tensor& eps_uncond, const torch::Tensor& eps_cond, double w);

// g_A = eps_A(lambda = k) - eps_A(lambda = 0)
torch::Tensor effect_guidance(const torch::Tensor& eps_at_k, const torch::Tensor& eps_at_0);

// w2 gated by the activation threshold: 0 while t_norm < act_t.
double effective_w2(const GuidanceConfig& cfg, double t_norm);

// eps_base_uncond + w1 g_p + w2(t_norm) g_A. With an inactive effect term the
// result is bit-identical to compose_cfg(eps_uncond, eps_cond, w1).
torch::Tensor compose_full(const torch::Tensor& eps_base_uncond, const torch::Tensor& g_p,
                           const torch::Tensor& g_A, const GuidanceConfig& cfg, double t_norm);

}  // namespace paramstyle

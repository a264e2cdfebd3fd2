// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/guidance.hpp"

#include <cmath>
#include <stdexcept>

namespace paramstyle {

void GuidanceConfig::validate() const {
  for (double v : {w, w1, w2}) {
    if (!std::isfinite(v)) throw std::invalid_argument("guidance scales must be finite");
  }
  if (!(act_t >= 0.0 && act_t <= 1.0)) throw std::invalid_argument("act_t must lie in [0, 1]");
}

nlohmann::json GuidanceConfig::to_json() const {
  return {{"w", w}, {"w1", w1}, {"w2", w2}, {"act_t", act_t}};
}

GuidanceConfig GuidanceConfig::from_json(const nlohmann::json& j) {
  GuidanceConfig c;
  c.w = j.value("w", c.w);
  c.w1 = j.value("w1", c.w1);
  c.w2 = j.value("w2", c.w2);
  c.act_t = j.value("act_t", c.act_t);
  c.validate();
  return c;
}

namespace {

torch::Tensor guided(const torch::Tensor& base, const torch::Tensor& direction, double scale) {
  return base + direction * scale;
}

}  // namespace

torch::Tensor compose_cfg(const torch::Tensor& eps_uncond, const torch::Tensor& eps_cond, double w) {
  if (!eps_uncond.sizes().equals(eps_cond.sizes())) {
    throw std::invalid_argument("compose_cfg: shape mismatch");
  }
  return guided(eps_uncond, eps_cond - eps_uncond, w);
}

torch::Tensor effect_guidance(const torch::Tensor& eps_at_k, const torch::Tensor& eps_at_0) {
  if (!eps_at_k.sizes().equals(eps_at_0.sizes())) {
    throw std::invalid_argument("effect_guidance: shape mismatch");
  }
  return eps_at_k - eps_at_0;
}

double effective_w2(const GuidanceConfig& cfg, double t_norm) {
  return t_norm < cfg.act_t ? 0.0 : cfg.w2;
}

torch::Tensor compose_full(const torch::Tensor& eps_base_uncond, const torch::Tensor& g_p,
                           const torch::Tensor& g_A, const GuidanceConfig& cfg, double t_norm) {
  if (!(t_norm >= 0.0 && t_norm <= 1.0)) throw std::invalid_argument("t_norm must lie in [0, 1]");
  if (!eps_base_uncond.sizes().equals(g_p.sizes())) {
    throw std::invalid_argument("compose_full: shape mismatch");
  }
  auto eps = guided(eps_base_uncond, g_p, cfg.w1);
  const double w2 = effective_w2(cfg, t_norm);
  if (w2 == 0.0 || !g_A.defined()) return eps;
  if (!g_A.sizes().equals(g_p.sizes())) throw std::invalid_argument("compose_full: shape mismatch");
  return guided(eps, g_A, w2);
}

}  // namespace paramstyle

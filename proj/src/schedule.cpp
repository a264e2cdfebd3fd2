// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace paramstyle {

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == -1) return 1.0;
  if (t < -1 || t >= steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside schedule");
  }
  return alpha_bars[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max, ScheduleKind kind) {
  if (T < 2) throw std::invalid_argument("schedule needs T >= 2");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw std::invalid_argument("schedule needs 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.kind = kind;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.betas.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::kLinear) {
    for (int t = 0; t < T; ++t) {
      s.betas[t] = beta_min + (beta_max - beta_min) * t / (T - 1);
    }
  } else {
    constexpr double kOffset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 0; t < T; ++t) {
      const double beta = 1.0 - f(t + 1) / f(t);
      s.betas[t] = std::clamp(beta, beta_min, beta_max);
    }
  }
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

std::vector<int> ddim_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) {
    throw std::invalid_argument("DDIM steps must lie in [1, T]");
  }
  const int stride = T / steps;
  std::vector<int> out(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) out[i] = (steps - 1 - i) * stride;
  return out;
}

namespace {

void check_shapes(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (!a.sizes().equals(b.sizes())) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
  }
}

torch::Tensor gather_coeff(const std::vector<double>& table, const torch::Tensor& t,
                           const torch::Tensor& like, bool allow_minus_one) {
  auto idx = t.to(torch::kLong).contiguous();
  std::vector<double> values(static_cast<std::size_t>(idx.numel()));
  const auto* p = idx.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto ti = p[i];
    if (allow_minus_one && ti == -1) {
      values[i] = 1.0;
    } else {
      if (ti < 0 || ti >= static_cast<std::int64_t>(table.size())) {
        throw std::out_of_range("timestep outside schedule");
      }
      values[i] = table[static_cast<std::size_t>(ti)];
    }
  }
  std::vector<std::int64_t> shape(static_cast<std::size_t>(like.dim()), 1);
  shape[0] = idx.numel();
  return torch::tensor(values, torch::kDouble).to(like.dtype()).view(shape);
}

}  // namespace

torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, int t,
                        const NoiseSchedule& schedule) {
  check_shapes(z0, eps, "add_noise");
  if (t < 0 || t >= schedule.steps()) throw std::out_of_range("add_noise: timestep outside schedule");
  const double ab = schedule.alpha_bar(t);
  return z0 * std::sqrt(ab) + eps * std::sqrt(1.0 - ab);
}

torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, const torch::Tensor& t,
                        const NoiseSchedule& schedule) {
  check_shapes(z0, eps, "add_noise");
  if (t.numel() != z0.size(0)) throw std::invalid_argument("add_noise: one timestep per sample");
  const auto ab = gather_coeff(schedule.alpha_bars, t, z0, false);
  return z0 * ab.sqrt() + eps * (1.0 - ab).sqrt();
}

torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int t, int t_prev,
                        const NoiseSchedule& schedule) {
  check_shapes(z_t, eps_hat, "ddim_step");
  if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be < t");
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const auto z = z_t.to(torch::kDouble);
  const auto e = eps_hat.to(torch::kDouble);
  const auto z0_hat = (z - e * std::sqrt(1.0 - ab)) / std::sqrt(ab);
  return (z0_hat * std::sqrt(ab_prev) + e * std::sqrt(1.0 - ab_prev)).to(z_t.dtype());
}

torch::Tensor ddim_invert_step(const torch::Tensor& z_prev, const torch::Tensor& eps_hat,
                               int t_prev, int t, const NoiseSchedule& schedule) {
  check_shapes(z_prev, eps_hat, "ddim_invert_step");
  if (t_prev >= t) throw std::invalid_argument("ddim_invert_step: t_prev must be < t");
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const auto z = z_prev.to(torch::kDouble);
  const auto e = eps_hat.to(torch::kDouble);
  const auto z0_hat = (z - e * std::sqrt(1.0 - ab_prev)) / std::sqrt(ab_prev);
  return (z0_hat * std::sqrt(ab) + e * std::sqrt(1.0 - ab)).to(z_prev.dtype());
}

torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat,
                        const torch::Tensor& t, const torch::Tensor& t_prev,
                        const NoiseSchedule& schedule) {
  check_shapes(z_t, eps_hat, "ddim_step");
  if ((t_prev >= t).any().item<bool>()) throw std::invalid_argument("ddim_step: t_prev must be < t");
  const auto ab = gather_coeff(schedule.alpha_bars, t, z_t, false);
  const auto ab_prev = gather_coeff(schedule.alpha_bars, t_prev, z_t, true);
  const auto z0_hat = (z_t - eps_hat * (1.0 - ab).sqrt()) / ab.sqrt();
  return z0_hat * ab_prev.sqrt() + eps_hat * (1.0 - ab_prev).sqrt();
}

}  // namespace paramstyle

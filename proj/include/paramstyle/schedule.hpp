// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace paramstyle {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

// Variance-preserving noise schedule. alpha_bars[t] = prod_{s <= t} (1 - betas[s]).
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int steps() const { return static_cast<int>(betas.size()); }
  // alpha_bar(-1) == 1 so the final DDIM step lands on the clean estimate.
  double alpha_bar(int t) const;
};

// Throws std::invalid_argument unless T >= 2 and 0 < beta_min <= beta_max < 1.
// For the cosine kind, betas are clipped into [beta_min, beta_max].
NoiseSchedule make_schedule(int T, double beta_min = 1e-4, double beta_max = 0.02,
                            ScheduleKind kind = ScheduleKind::kLinear);

// Descending, uniformly strided DDIM timesteps: (steps-1)*stride, ..., stride, 0.
std::vector<int> ddim_timesteps(int T, int steps);

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, int t,
                        const NoiseSchedule& schedule);

// Per-sample timesteps (int64 tensor of shape [B]); differentiable in z0 and eps.
torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps,
                        const torch::Tensor& t, const NoiseSchedule& schedule);

// Deterministic (eta = 0) DDIM update from t to t_prev < t. The algebra runs in
// double precision; the result has the dtype of z_t.
torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat, int t, int t_prev,
                        const NoiseSchedule& schedule);

// Exact algebraic inverse of ddim_step for the same eps_hat.
torch::Tensor ddim_invert_step(const torch::Tensor& z_prev, const torch::Tensor& eps_hat,
                               int t_prev, int t, const NoiseSchedule& schedule);

// Per-sample DDIM step used by the training losses; stays in the dtype of z_t
// and keeps the autograd graph through eps_hat.
torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps_hat,
                        const torch::Tensor& t, const torch::Tensor& t_prev,
                        const NoiseSchedule& schedule);

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "paramstyle/dataset.hpp"
#include "paramstyle/model.hpp"

namespace paramstyle {

struct TrainConfig {
  int steps = 1000;
  int batch_size = 16;
  double lr = 1e-4;
  double beta = 5.0;              // regularization strength (adapter phase)
  double prompt_dropout = 0.1;    // probability of replacing the prompt by the null embedding
  // When false, adapter timesteps are drawn only from the range where effect
  // guidance is active at sampling time (t_norm >= act_t); when true (the
  // default) they are drawn uniformly from [0, T).
  bool act_free = true;
  double act_t = 0.1;
  bool flip = true;               // random horizontal flips
  std::uint64_t seed = 0;
  int checkpoint_every = 1000;    // 0 disables intermediate checkpoints

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// The whole toy dataset resident in memory as tensors.
struct TrainingData {
  std::vector<std::string> attributes;
  torch::Tensor content;     // [N, 3, H, W] latents
  torch::Tensor edges;       // [N, 1, H, W]
  torch::Tensor stylized;    // [N, V, 3, H, W] latents; variant 0 is the lambda = 0 rendition
  torch::Tensor lambdas;     // [N, V, n_attributes]
  std::vector<int> prompt_ids;

  std::int64_t size() const { return content.size(0); }
  std::int64_t variants() const { return stylized.size(1); }
};

// Groups manifest records by content image. Every content image needs its
// lambda = 0 rendition and the same number of variants.
TrainingData load_training_data(const Manifest& manifest);

// One adapter training example pair: the same content at strength k and at 0.
struct PairedBatch {
  torch::Tensor z0_k;        // [B, 3, H, W]
  torch::Tensor z0_0;        // [B, 3, H, W]
  torch::Tensor eps;         // shared noise
  torch::Tensor t;           // shared timesteps [B] int64
  torch::Tensor lambda;      // [B, n_attributes]
  torch::Tensor edge;        // [B, 1, H, W]
  std::vector<int> prompt_ids;

  void validate() const;
};

struct LossRecord {
  int step = 0;
  double diffusion = 0.0;
  std::optional<double> reg;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> losses;
  bool aborted = false;
  std::string abort_reason;
  std::filesystem::path checkpoint;  // last good checkpoint written (may be empty)
};

using ProgressFn = std::function<void(const LossRecord&)>;

// Eq. 1: || eps - eps_theta(z_t, t, c_p [, control]) ||^2, averaged.
torch::Tensor diffusion_loss(const torch::Tensor& eps, const torch::Tensor& eps_hat);

// One-step DDIM regularizer (mean over elements):
//   mean( ((z_{t-1,k} - z_{t-1,0}) / (1 + |z0_k - z0_0|))^2 )
// with z_{t-1,lambda} = ddim_step(z_t, eps_A(z_t, t, lambda), t, t-1) and z_t
// = add_noise(z0_k, eps, t).
torch::Tensor reg_loss_from_predictions(const torch::Tensor& z_t, const torch::Tensor& eps_k,
                                        const torch::Tensor& eps_0, const PairedBatch& pair,
                                        const NoiseSchedule& schedule);
torch::Tensor reg_loss(StyleModel& model, const PairedBatch& pair);

struct AdapterLoss {
  torch::Tensor diffusion;
  torch::Tensor reg;  // undefined when beta == 0
  torch::Tensor total;
};

// L_t = || eps - eps_A(z_t, t, c_p, c_e, lambda_k) ||^2 + beta L_reg.
AdapterLoss adapter_loss(StyleModel& model, const PairedBatch& pair, double beta);

// Base-phase pretraining (denoiser + prompts, phase kBase) or control-branch
// training (phase kControl). Writes loss.csv and a bundle checkpoint under
// out_dir. Stops on a non-finite loss and restores the last good weights.
TrainResult train_base(StyleModel& model, const TrainingData& data, const TrainConfig& cfg,
                       Phase phase, const std::filesystem::path& out_dir,
                       const ProgressFn& progress = {});

// Adapter fine-tuning on (lambda = k, lambda = 0) pairs. Only adapter weights
// move; the frozen fingerprint is verified at every checkpoint.
TrainResult train_adapter(StyleModel& model, const TrainingData& data, const TrainConfig& cfg,
                          const std::filesystem::path& out_dir, const ProgressFn& progress = {});

// Draws a paired batch deterministically from `rng`.
PairedBatch sample_pairs(const TrainingData& data, int batch, std::mt19937_64& rng,
                         const NoiseSchedule& schedule, bool flip, int t_max);

void write_loss_csv(const std::vector<LossRecord>& losses, const std::filesystem::path& path);

}  // namespace paramstyle

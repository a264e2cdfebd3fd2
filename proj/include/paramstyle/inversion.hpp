// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "paramstyle/guidance.hpp"
#include "paramstyle/image.hpp"
#include "paramstyle/model.hpp"
#include "paramstyle/sampler.hpp"

namespace paramstyle {

class InversionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InversionConfig {
  int steps = 50;
  int iterations = 10;  // optimizer iterations per timestep; 0 keeps the plain lambda = 0 tokens
  double lr = 1e-2;
  int prompt_id = -1;
  GuidanceConfig guidance;  // w1 and w2 of the guidance being inverted

  void validate() const;
  nlohmann::json to_json() const;
  static InversionConfig from_json(const nlohmann::json& j);
};

// Everything needed to replay or edit an inverted image.
struct InversionRecord {
  std::string image_hash;          // sha256 over the 8-bit image and the inversion settings
  InversionConfig config;
  torch::Tensor z_T;               // [1, 3, H, W]
  torch::Tensor hint;              // [1, 1, H, W]
  std::vector<torch::Tensor> null_tokens;  // per sampling step, [1, n+1, d]
  std::vector<double> initial_objective;   // per sampling step
  std::vector<double> final_objective;
  double final_lr = 0.0;
  torch::Tensor reconstruction;    // z_0 reached while optimizing (not serialized)

  nlohmann::json to_json() const;
  static InversionRecord from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static InversionRecord load(const std::filesystem::path& path);
};

// Key under which an inversion of `image` with `cfg` is cached.
std::string inversion_key(const ImageBuffer& image, const InversionConfig& cfg);

// DDIM inversion with w = 1 (prompt-conditioned, control-steered): returns
// the states z*_{t} in sampling order, i.e. element 0 is z*_T and the last
// element is z_0. The model is evaluated at (z_{t_prev}, t).
std::vector<torch::Tensor> ddim_inversion(StyleModel& model, const torch::Tensor& z0,
                                          const torch::Tensor& hint, int prompt_id, int steps);

// Per-step optimization of the null-parameter tokens so the guided
// trajectory from z*_T tracks `targets`. Keeps the best tokens per step, so
// every final objective is <= its initial one. The learning rate halves after
// 3N consecutive objective increases; a second such run raises InversionError.
void optimize_null_param(StyleModel& model, const std::vector<torch::Tensor>& targets,
                         InversionRecord& record);

// Full pipeline: edge map, DDIM inversion, null-parameter optimization.
InversionRecord invert(StyleModel& model, const ImageBuffer& image, const InversionConfig& cfg);

// Replays the stored trajectory with effect strength `lambda`; lambda = 0
// reproduces the reconstruction exactly.
SampleResult edit_inverted(StyleModel& model, const InversionRecord& record, const StyleParams& lambda,
                           std::optional<GuidanceConfig> guidance = std::nullopt);

}  // namespace paramstyle

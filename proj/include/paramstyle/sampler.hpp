// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "paramstyle/guidance.hpp"
#include "paramstyle/model.hpp"

namespace paramstyle {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleOptions {
  int prompt_id = -1;           // -1: unconditional (g_p vanishes)
  std::vector<int> prompt_ids;  // optional per-row prompts; overrides prompt_id
  torch::Tensor hint;           // optional edge map [1 or B, 1, H, W]; enables the control branch
  std::optional<StyleParams> lambda;  // enables effect guidance (requires hint)
  // Prompt-edit guidance, the classic way to dial an edit without an explicit
  // strength parameter: adds edit_scale (eps(edit prompt) - eps(prompt)).
  // Only used without lambda; one edit prompt per row (or one for all).
  std::vector<int> edit_prompt_ids;
  double edit_scale = 0.0;
  GuidanceConfig guidance;
  int steps = 50;
  bool keep_trajectory = false;
  torch::Tensor z_T;            // optional start latent [B, 3, H, W]; otherwise drawn from the seeds
  // Optional per-step replacement of the lambda = 0 tokens in g_A (one
  // [1, n+1, d] tensor per step), as produced by inversion.
  std::vector<torch::Tensor> null_param_tokens;
};

struct SampleResult {
  torch::Tensor latents;                 // [B, 3, H, W] final z_0
  std::vector<torch::Tensor> trajectory; // z_T, then z after every step (when requested)
  std::vector<int> timesteps;
};

// Standard-normal start latents, one independent stream per seed.
torch::Tensor initial_noise(const std::vector<std::uint64_t>& seeds, const DenoiserConfig& cfg);

// Normalized denoising progress for step index i of n: i / n (0 at the start).
double progress_at(int step_index, int steps);

// One guided noise prediction at timestep t (the per-step core of sample()).
// Without a hint: compose_cfg with guidance.w. With a hint: the control branch
// conditions both base predictions; with lambda, effect guidance is composed
// through compose_full and gated by act_t.
torch::Tensor guided_eps(StyleModel& model, const torch::Tensor& z, int t, const SampleOptions& opts,
                         double t_norm, const torch::Tensor& null_tokens = {});

// Deterministic DDIM sampling (eta = 0) with composed guidance. Aborts with
// SamplingError on a non-finite prediction.
SampleResult sample(StyleModel& model, const std::vector<std::uint64_t>& seeds,
                    const SampleOptions& opts);

// Binary trajectory dump: 4-byte little-endian header length, JSON header
// {T, steps, shape, seed, timesteps}, then float32 data for every state.
void write_trajectory(const SampleResult& result, const std::filesystem::path& path, int T,
                      std::uint64_t seed);

}  // namespace paramstyle

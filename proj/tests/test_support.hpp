// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit tests: micro model configurations, random
// images and scratch directories.

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <random>
#include <string>

#include "paramstyle/filters.hpp"
#include "paramstyle/image.hpp"
#include "paramstyle/model.hpp"

namespace paramstyle::testing {

// A model small enough for finite differences and quick sampling.
inline DenoiserConfig micro_config(int image_size = 4) {
  DenoiserConfig cfg;
  cfg.image_size = image_size;
  cfg.base_channels = 8;
  cfg.channel_mult = {1, 2, 2};
  cfg.attention_resolutions = {image_size / 2, image_size / 4};
  cfg.prompt_tokens = 2;
  cfg.context_dim = 8;
  cfg.time_embed_dim = 16;
  cfg.lambda_embed_dim = 8;
  cfg.norm_groups = 4;
  cfg.hint_hidden = 4;
  return cfg;
}

inline std::vector<std::string> two_attributes() {
  return {std::string(kContourWidth), std::string(kBlackpoint)};
}

// Gives every zero-initialized projection (control zero convs, extra
// attention outputs) small random values so all parameters influence the
// output.
inline void perturb_zero_init(StyleModel& model, std::uint64_t seed, double scale = 0.05) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& p : model->named_parameters()) {
    if (p.value().abs().max().item<double>() == 0.0) {
      p.value().copy_(torch::randn(p.value().sizes(), gen, p.value().options()) * scale);
    }
  }
}

inline ImageBuffer random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageBuffer img(w, h, c);
  for (float& v : img.data) v = u(rng);
  return img;
}

// Vertical step: dark on the left half, bright on the right.
inline ImageBuffer step_image(int size, int channels = 3, float dark = 0.1f, float bright = 0.9f) {
  ImageBuffer img(size, size, channels);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = x < size / 2 ? dark : bright;
    }
  }
  return img;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("paramstyle_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kDouble) - b.to(torch::kDouble)).abs().max().item<double>();
}

}  // namespace paramstyle::testing

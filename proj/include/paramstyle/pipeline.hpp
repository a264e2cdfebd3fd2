// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paramstyle/guidance.hpp"
#include "paramstyle/image.hpp"
#include "paramstyle/inversion.hpp"
#include "paramstyle/model.hpp"

namespace paramstyle {

// The spatial anchor used for seed-based generation: a toy scene for the
// prompt, rendered from the seed, and its edge map.
struct SceneCondition {
  int prompt_id = 0;
  std::uint64_t seed = 0;
  ImageBuffer scene;
  ImageBuffer edges;
};

SceneCondition scene_condition(int prompt_id, std::uint64_t seed, int image_size = 32);

struct RenderRequest {
  int prompt_id = 0;
  std::uint64_t seed = 0;
  int steps = 50;
  GuidanceConfig guidance;
  std::map<std::string, float> lambda;   // missing attributes are 0
  std::optional<ImageBuffer> edges;      // overrides the scene edge map
};

// Effect-guided generation from a seed. With every lambda at 0 the result is
// the plain guided sample (g_A is never evaluated), so an "edit" at lambda = 0
// reproduces the base generation exactly.
ImageBuffer render(StyleModel& model, const RenderRequest& request);

// Lambda-edit of an inverted image.
ImageBuffer render_inverted(StyleModel& model, const InversionRecord& record,
                            const std::map<std::string, float>& lambda,
                            std::optional<GuidanceConfig> guidance = std::nullopt);

// Concatenates equally sized images left to right.
ImageBuffer hstack(const std::vector<ImageBuffer>& images);

}  // namespace paramstyle

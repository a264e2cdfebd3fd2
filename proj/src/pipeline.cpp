// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/pipeline.hpp"

#include <stdexcept>

#include "paramstyle/convert.hpp"
#include "paramstyle/filters.hpp"
#include "paramstyle/sampler.hpp"
#include "paramstyle/scene.hpp"

namespace paramstyle {

SceneCondition scene_condition(int prompt_id, std::uint64_t seed, int image_size) {
  if (prompt_id < 0 || prompt_id >= kPromptVocabularySize) {
    throw std::invalid_argument("prompt id must lie in [0, " + std::to_string(kPromptVocabularySize) + ")");
  }
  SceneCondition c;
  c.prompt_id = prompt_id;
  c.seed = seed;
  c.scene = generate_scene(prompt_id, mix_seed(seed, 0xE7A1), image_size);
  c.edges = edge_map(c.scene);
  return c;
}

ImageBuffer render(StyleModel& model, const RenderRequest& request) {
  const auto lambda = StyleParams::from_map(request.lambda, model->attributes());
  SampleOptions opts;
  opts.prompt_id = request.prompt_id;
  opts.guidance = request.guidance;
  opts.steps = request.steps;
  const ImageBuffer edges = request.edges
                                ? *request.edges
                                : scene_condition(request.prompt_id, request.seed, model->config().image_size).edges;
  opts.hint = edge_to_hint(edges.channels == 1 ? edges : to_gray(edges)).unsqueeze(0);
  if (model->has_adapter()) opts.lambda = lambda;
  else if (!lambda.all_zero()) throw std::invalid_argument("model has no style adapter");
  if (!opts.lambda) opts.guidance.w = opts.guidance.w1;  // same guidance either way
  return latent_to_image(sample(model, {request.seed}, opts).latents);
}

ImageBuffer render_inverted(StyleModel& model, const InversionRecord& record,
                            const std::map<std::string, float>& lambda,
                            std::optional<GuidanceConfig> guidance) {
  const auto params = StyleParams::from_map(lambda, model->attributes());
  return latent_to_image(edit_inverted(model, record, params, guidance).latents);
}

ImageBuffer hstack(const std::vector<ImageBuffer>& images) {
  if (images.empty()) throw std::invalid_argument("hstack: no images");
  const auto& first = images.front();
  ImageBuffer out(first.width * static_cast<int>(images.size()), first.height, first.channels);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.width != first.width || img.height != first.height || img.channels != first.channels) {
      throw std::invalid_argument("hstack: images differ in shape");
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < img.channels; ++c) {
          out.at(static_cast<int>(i) * first.width + x, y, c) = img.at(x, y, c);
        }
      }
    }
  }
  return out;
}

}  // namespace paramstyle

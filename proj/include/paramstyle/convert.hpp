// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include "paramstyle/image.hpp"

namespace paramstyle {

// Image in [0,1] (HWC) -> latent tensor [C, H, W] in [-1, 1]: z = 2 x - 1.
torch::Tensor image_to_latent(const ImageBuffer& img);

// Gray edge map -> hint tensor [1, H, W] in [0, 1].
torch::Tensor edge_to_hint(const ImageBuffer& edges);

// Latent [C, H, W] (or [1, C, H, W]) -> image, clamping into [0, 1].
ImageBuffer latent_to_image(const torch::Tensor& latent);

}  // namespace paramstyle

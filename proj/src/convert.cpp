// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/convert.hpp"

#include <cstring>
#include <stdexcept>

namespace paramstyle {

namespace {

torch::Tensor hwc_to_chw(const ImageBuffer& img) {
  img.validate();
  auto t = torch::from_blob(const_cast<float*>(img.data.data()),
                            {img.height, img.width, img.channels}, torch::kFloat);
  return t.permute({2, 0, 1}).contiguous().clone();
}

}  // namespace

torch::Tensor image_to_latent(const ImageBuffer& img) { return hwc_to_chw(img) * 2.0 - 1.0; }

torch::Tensor edge_to_hint(const ImageBuffer& edges) {
  if (edges.channels != 1) throw std::invalid_argument("edge map must be single-channel");
  return hwc_to_chw(edges);
}

ImageBuffer latent_to_image(const torch::Tensor& latent) {
  auto z = latent.detach().to(torch::kFloat);
  if (z.dim() == 4) {
    if (z.size(0) != 1) throw std::invalid_argument("latent_to_image expects a single image");
    z = z[0];
  }
  if (z.dim() != 3) throw std::invalid_argument("latent_to_image expects [C, H, W]");
  const auto x = ((z + 1.0) * 0.5).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
  ImageBuffer img(static_cast<int>(x.size(1)), static_cast<int>(x.size(0)),
                  static_cast<int>(x.size(2)));
  std::memcpy(img.data.data(), x.data_ptr<float>(), img.data.size() * sizeof(float));
  return img;
}

}  // namespace paramstyle

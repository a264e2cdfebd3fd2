// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "paramstyle/image.hpp"

namespace paramstyle {

// Known stylization attributes, in the canonical order filters are applied.
inline constexpr std::string_view kContourWidth = "contourWidth";
inline constexpr std::string_view kDetails = "details";
inline constexpr std::string_view kDepthPower = "depthPower";
inline constexpr std::string_view kColorfulness = "colorfulness";
inline constexpr std::string_view kBlackpoint = "blackpoint";
inline constexpr std::string_view kXdogSensitivity = "xdogSensitivity";

const std::vector<std::string>& known_attributes();
bool is_known_attribute(std::string_view name);

// Attribute name -> strength. Missing attributes are treated as 0.
using FilterParams = std::map<std::string, float>;

// Normalized 1-D Gaussian taps truncated at ceil(3 sigma).
std::vector<float> gaussian_kernel(float sigma);

// Reflect-101 border index (-1 -> 1, n -> n - 2); valid for any offset.
int reflect_index(int i, int n);

// Separable Gaussian blur applied per channel with reflect-101 borders.
ImageBuffer gaussian_blur(const ImageBuffer& img, float sigma);

struct XdogParams {
  float sigma = 1.0f;
  float k = 1.6f;
  float tau = 0.99f;
  float epsilon = 0.01f;
  float phi = 10.0f;
};

// Thresholded extended difference of Gaussians on the luminance channel.
// u = G_sigma * I - tau * G_{k sigma} * I; 1 where u >= epsilon,
// 1 + tanh(phi (u - epsilon)) elsewhere, clamped to [0, 1].
ImageBuffer xdog(const ImageBuffer& img, const XdogParams& params = {});

// Levels remap with black point b = 0.3 * lambda.
ImageBuffer blackpoint(const ImageBuffer& img, float lambda);

// Dilation radius of the contour mask for a given strength: round(3 lambda).
int contour_radius(float lambda);

// xDoG line mask whose dark pixels are dilated by contour_radius(lambda).
// Radius 0 at lambda = 0.
ImageBuffer contour_mask(const ImageBuffer& img, float lambda);

// img * (1 - min(1, 3 lambda) * (1 - contour_mask)); identity at lambda = 0.
ImageBuffer contour_overlay(const ImageBuffer& img, float lambda);

// Unsharp mask with a wide (sigma 4) base; the "depthPower" proxy.
ImageBuffer local_contrast(const ImageBuffer& img, float lambda);

// Chroma around luminance scaled by (1 + lambda).
ImageBuffer colorfulness(const ImageBuffer& img, float lambda);

// Unsharp mask with sigma 1.
ImageBuffer details(const ImageBuffer& img, float lambda);

// Multiplicative xDoG line overlay whose sharpness grows with lambda.
ImageBuffer xdog_sensitivity(const ImageBuffer& img, float lambda);

// Canny edges: Gaussian sigma 1, Sobel gradients (magnitude / 4),
// non-maximum suppression and 8-connected hysteresis. Output is binary.
ImageBuffer edge_map(const ImageBuffer& img, float low = 0.08f, float high = 0.2f);

// Applies one attribute filter by name. Throws std::invalid_argument for
// unknown attributes or negative strengths.
ImageBuffer apply_attribute(const ImageBuffer& img, std::string_view attribute, float lambda);

// Applies every attribute in canonical order.
ImageBuffer apply_style(const ImageBuffer& img, const FilterParams& params);

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/filters.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace paramstyle {

namespace {

constexpr XdogParams kContourXdog{0.7f, 1.6f, 1.0f, -0.01f, 40.0f};

void check_strength(float lambda, const char* who) {
  if (!std::isfinite(lambda) || lambda < 0.0f) {
    throw std::invalid_argument(std::string(who) + ": strength must be finite and >= 0");
  }
}

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

ImageBuffer unsharp(const ImageBuffer& img, float lambda, float sigma) {
  if (lambda == 0.0f) return img;
  const ImageBuffer blurred = gaussian_blur(img, sigma);
  ImageBuffer out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = clamp01(img.data[i] + lambda * (img.data[i] - blurred.data[i]));
  }
  return out;
}

// Darkens img by a mask in [0, 1] at the given opacity.
ImageBuffer overlay_mask(const ImageBuffer& img, const ImageBuffer& mask, float opacity) {
  ImageBuffer out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float m = 1.0f - opacity * (1.0f - mask.at(x, y));
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = clamp01(img.at(x, y, c) * m);
    }
  }
  return out;
}

}  // namespace

const std::vector<std::string>& known_attributes() {
  static const std::vector<std::string> names{
      std::string(kContourWidth), std::string(kDetails),   std::string(kDepthPower),
      std::string(kColorfulness), std::string(kBlackpoint), std::string(kXdogSensitivity)};
  return names;
}

bool is_known_attribute(std::string_view name) {
  const auto& names = known_attributes();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<float> gaussian_kernel(float sigma) {
  if (!(sigma > 0.0f) || !std::isfinite(sigma)) {
    throw std::invalid_argument("gaussian sigma must be > 0");
  }
  const int radius = static_cast<int>(std::ceil(3.0f * sigma));
  std::vector<float> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    taps[i + radius] = static_cast<float>(w);
    sum += w;
  }
  for (float& t : taps) t = static_cast<float>(t / sum);
  return taps;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, float sigma) {
  const auto taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  ImageBuffer tmp(img.width, img.height, img.channels);
  ImageBuffer out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          acc += taps[k + radius] * img.at(reflect_index(x + k, img.width), y, c);
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          acc += taps[k + radius] * tmp.at(x, reflect_index(y + k, img.height), c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer xdog(const ImageBuffer& img, const XdogParams& p) {
  img.validate();
  if (!(p.sigma > 0.0f)) throw std::invalid_argument("xdog: sigma must be > 0");
  if (!(p.k > 1.0f)) throw std::invalid_argument("xdog: k must be > 1");
  const ImageBuffer gray = to_gray(img);
  const ImageBuffer narrow = gaussian_blur(gray, p.sigma);
  const ImageBuffer wide = gaussian_blur(gray, p.k * p.sigma);
  ImageBuffer out(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float u = narrow.data[i] - p.tau * wide.data[i];
    const float v = u >= p.epsilon ? 1.0f : 1.0f + std::tanh(p.phi * (u - p.epsilon));
    out.data[i] = clamp01(v);
  }
  return out;
}

ImageBuffer blackpoint(const ImageBuffer& img, float lambda) {
  img.validate();
  check_strength(lambda, "blackpoint");
  if (lambda == 0.0f) return img;
  const float b = 0.3f * lambda;
  if (b >= 1.0f) throw std::invalid_argument("blackpoint: strength must be < 1/0.3");
  ImageBuffer out = img;
  for (float& v : out.data) v = clamp01((v - b) / (1.0f - b));
  return out;
}

int contour_radius(float lambda) { return static_cast<int>(std::lround(3.0f * lambda)); }

ImageBuffer contour_mask(const ImageBuffer& img, float lambda) {
  check_strength(lambda, "contour_mask");
  const ImageBuffer lines = xdog(img, kContourXdog);
  const int r = contour_radius(lambda);
  if (r == 0) return lines;
  ImageBuffer out(lines.width, lines.height, 1);
  for (int y = 0; y < lines.height; ++y) {
    for (int x = 0; x < lines.width; ++x) {
      float m = 1.0f;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= lines.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= lines.width || dx * dx + dy * dy > r * r) continue;
          m = std::min(m, lines.at(xx, yy));
        }
      }
      out.at(x, y) = m;
    }
  }
  return out;
}

ImageBuffer contour_overlay(const ImageBuffer& img, float lambda) {
  img.validate();
  check_strength(lambda, "contour_overlay");
  if (lambda == 0.0f) return img;
  return overlay_mask(img, contour_mask(img, lambda), std::min(1.0f, 3.0f * lambda));
}

ImageBuffer local_contrast(const ImageBuffer& img, float lambda) {
  img.validate();
  check_strength(lambda, "local_contrast");
  return unsharp(img, lambda, 4.0f);
}

ImageBuffer details(const ImageBuffer& img, float lambda) {
  img.validate();
  check_strength(lambda, "details");
  return unsharp(img, lambda, 1.0f);
}

ImageBuffer colorfulness(const ImageBuffer& img, float lambda) {
  img.validate();
  check_strength(lambda, "colorfulness");
  if (lambda == 0.0f || img.channels == 1) return img;
  ImageBuffer out = img;
  const float gain = 1.0f + lambda;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const float* p = &img.data[i * 3];
    if (p[0] == p[1] && p[1] == p[2]) continue;
    const float luma = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = clamp01(luma + gain * (p[c] - luma));
  }
  return out;
}

ImageBuffer xdog_sensitivity(const ImageBuffer& img, float lambda) {
  img.validate();
  check_strength(lambda, "xdog_sensitivity");
  if (lambda == 0.0f) return img;
  const XdogParams p{1.0f, 1.6f, 1.0f, -0.005f, 10.0f + 90.0f * lambda};
  return overlay_mask(img, xdog(img, p), std::min(1.0f, lambda));
}

ImageBuffer edge_map(const ImageBuffer& img, float low, float high) {
  img.validate();
  if (!(low >= 0.0f && low < high && high <= 1.0f)) {
    throw std::invalid_argument("edge_map: thresholds must satisfy 0 <= low < high <= 1");
  }
  const ImageBuffer gray = gaussian_blur(to_gray(img), 1.0f);
  const int w = gray.width;
  const int h = gray.height;
  auto px = [&](int x, int y) { return gray.at(reflect_index(x, w), reflect_index(y, h)); };

  std::vector<float> mag(static_cast<std::size_t>(w) * h);
  std::vector<float> gxs(mag.size());
  std::vector<float> gys(mag.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = (px(x + 1, y - 1) + 2.0f * px(x + 1, y) + px(x + 1, y + 1)) -
                       (px(x - 1, y - 1) + 2.0f * px(x - 1, y) + px(x - 1, y + 1));
      const float gy = (px(x - 1, y + 1) + 2.0f * px(x, y + 1) + px(x + 1, y + 1)) -
                       (px(x - 1, y - 1) + 2.0f * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gxs[i] = gx;
      gys[i] = gy;
      mag[i] = std::hypot(gx, gy) / 4.0f;
    }
  }

  // 0: none, 1: weak, 2: strong
  std::vector<std::uint8_t> cls(mag.size(), 0);
  constexpr float kTan22 = 0.41421356f;
  constexpr float kTan67 = 2.41421356f;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const float m = mag[i];
      if (m < low) continue;
      const float ax = std::fabs(gxs[i]);
      const float ay = std::fabs(gys[i]);
      int dx1, dy1;
      if (ay <= kTan22 * ax) {
        dx1 = -1; dy1 = 0;
      } else if (ay >= kTan67 * ax) {
        dx1 = 0; dy1 = -1;
      } else if ((gxs[i] > 0) == (gys[i] > 0)) {
        dx1 = -1; dy1 = -1;
      } else {
        dx1 = 1; dy1 = -1;
      }
      const float before = mag[static_cast<std::size_t>(y + dy1) * w + (x + dx1)];
      const float after = mag[static_cast<std::size_t>(y - dy1) * w + (x - dx1)];
      if (m > before && m >= after) cls[i] = m >= high ? 2 : 1;
    }
  }

  ImageBuffer out(w, h, 1, 0.0f);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (cls[i] == 2) stack.push_back(i);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (out.data[i] == 1.0f) continue;
    out.data[i] = 1.0f;
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx;
        const int yy = y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
        if (cls[j] != 0 && out.data[j] == 0.0f) stack.push_back(j);
      }
    }
  }
  return out;
}

ImageBuffer apply_attribute(const ImageBuffer& img, std::string_view attribute, float lambda) {
  if (attribute == kContourWidth) return contour_overlay(img, lambda);
  if (attribute == kDetails) return details(img, lambda);
  if (attribute == kDepthPower) return local_contrast(img, lambda);
  if (attribute == kColorfulness) return colorfulness(img, lambda);
  if (attribute == kBlackpoint) return blackpoint(img, lambda);
  if (attribute == kXdogSensitivity) return xdog_sensitivity(img, lambda);
  throw std::invalid_argument("unknown attribute '" + std::string(attribute) + "'");
}

ImageBuffer apply_style(const ImageBuffer& img, const FilterParams& params) {
  for (const auto& [name, value] : params) {
    if (!is_known_attribute(name)) {
      throw std::invalid_argument("unknown attribute '" + name + "'");
    }
  }
  ImageBuffer out = img;
  for (const auto& name : known_attributes()) {
    const auto it = params.find(name);
    if (it == params.end()) continue;
    out = apply_attribute(out, name, it->second);
  }
  return out;
}

}  // namespace paramstyle

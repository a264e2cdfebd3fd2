// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

namespace paramstyle {

namespace {

using Rgb = std::array<float, 3>;

enum class Shape { kCircles, kSquares, kTriangles, kStripes };

constexpr std::array<const char*, 4> kShapeNames{"circles", "squares", "triangles", "stripes"};
constexpr std::array<const char*, 4> kPaletteNames{"warm", "cool", "forest", "mono"};

// Four colors per palette; the first two drive the background gradient.
constexpr std::array<std::array<Rgb, 4>, 4> kPalettes{{
    {{{0.85f, 0.55f, 0.35f}, {0.75f, 0.30f, 0.20f}, {0.90f, 0.80f, 0.30f}, {0.55f, 0.15f, 0.15f}}},
    {{{0.35f, 0.55f, 0.85f}, {0.20f, 0.30f, 0.60f}, {0.40f, 0.80f, 0.85f}, {0.50f, 0.35f, 0.70f}}},
    {{{0.45f, 0.65f, 0.35f}, {0.25f, 0.40f, 0.20f}, {0.60f, 0.45f, 0.25f}, {0.75f, 0.80f, 0.45f}}},
    {{{0.70f, 0.70f, 0.70f}, {0.40f, 0.40f, 0.40f}, {0.90f, 0.90f, 0.90f}, {0.15f, 0.15f, 0.15f}}},
}};

float edge_fn(float ax, float ay, float bx, float by, float px, float py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

const std::vector<std::string>& prompt_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (const char* palette : kPaletteNames) {
      for (const char* shape : kShapeNames) v.push_back(std::string(palette) + " " + shape);
    }
    return v;
  }();
  return vocab;
}

int prompt_id_from_text(const std::string& text) {
  const auto& vocab = prompt_vocabulary();
  const auto it = std::find(vocab.begin(), vocab.end(), text);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

ImageBuffer generate_scene(int prompt_id, std::uint64_t seed, int size) {
  if (prompt_id < 0 || prompt_id >= kPromptVocabularySize) {
    throw std::invalid_argument("prompt id out of range: " + std::to_string(prompt_id));
  }
  if (size < 4) throw std::invalid_argument("scene size must be >= 4");
  const auto& palette = kPalettes[static_cast<std::size_t>(prompt_id / 4)];
  const auto shape = static_cast<Shape>(prompt_id % 4);
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(prompt_id)));
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  auto jitter = [&](const Rgb& c) {
    Rgb out;
    for (int i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + 0.08f * (unit(rng) - 0.5f), 0.05f, 0.95f);
    return out;
  };

  ImageBuffer img(size, size, 3);
  const Rgb top = jitter(palette[0]);
  const Rgb bottom = jitter(palette[1]);
  const float angle = unit(rng) * 6.2831853f;
  const float gx = std::cos(angle);
  const float gy = std::sin(angle);
  const float s = static_cast<float>(size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float u = std::clamp(0.5f + ((x / s - 0.5f) * gx + (y / s - 0.5f) * gy), 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = top[c] * (1.0f - u) + bottom[c] * u;
    }
  }

  const int count = 2 + static_cast<int>(unit(rng) * 3.0f);
  for (int n = 0; n < count; ++n) {
    const Rgb color = jitter(palette[2 + (n % 2)]);
    const float cx = (0.15f + 0.7f * unit(rng)) * s;
    const float cy = (0.15f + 0.7f * unit(rng)) * s;
    const float r = (0.12f + 0.15f * unit(rng)) * s;
    const float theta = unit(rng) * 6.2831853f;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const float px = x + 0.5f;
        const float py = y + 0.5f;
        bool inside = false;
        switch (shape) {
          case Shape::kCircles:
            inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
            break;
          case Shape::kSquares:
            inside = std::fabs(px - cx) <= r && std::fabs(py - cy) <= r;
            break;
          case Shape::kTriangles: {
            std::array<float, 6> v;
            for (int k = 0; k < 3; ++k) {
              const float a = theta + 2.0943951f * k;
              v[2 * k] = cx + 1.3f * r * std::cos(a);
              v[2 * k + 1] = cy + 1.3f * r * std::sin(a);
            }
            const float e0 = edge_fn(v[0], v[1], v[2], v[3], px, py);
            const float e1 = edge_fn(v[2], v[3], v[4], v[5], px, py);
            const float e2 = edge_fn(v[4], v[5], v[0], v[1], px, py);
            inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
            break;
          }
          case Shape::kStripes: {
            const float d = (px - cx) * std::cos(theta) + (py - cy) * std::sin(theta);
            inside = std::fabs(d) <= 0.35f * r;
            break;
          }
        }
        if (inside) {
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
        }
      }
    }
  }
  return img;
}

}  // namespace paramstyle

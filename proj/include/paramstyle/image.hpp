// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace paramstyle {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major, channel-interleaved float image with intensities in [0, 1].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, float fill = 0.0f);

  float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return data.empty(); }

  // Throws ImageError when the buffer violates its invariants: size mismatch,
  // unsupported channel count, or values outside [0, 1] / non-finite.
  void validate() const;

  bool operator==(const ImageBuffer&) const = default;
};

// Luminance (0.299, 0.587, 0.114). Gray input is returned unchanged.
ImageBuffer to_gray(const ImageBuffer& img);

// Replicates a gray image into three channels.
ImageBuffer gray_to_rgb(const ImageBuffer& img);

// 8-bit PNG codec. Writing quantizes with round(v * 255); reading divides by 255.
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);
void write_png(const ImageBuffer& img, const std::filesystem::path& path);
ImageBuffer read_png(const std::filesystem::path& path);

// Round-trips an image through 8-bit quantization without touching disk.
ImageBuffer quantize8(const ImageBuffer& img);

// Peak signal-to-noise ratio for unit-range images, in dB.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace paramstyle

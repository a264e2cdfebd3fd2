// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace paramstyle {

ImageBuffer::ImageBuffer(int w, int h, int c, float fill)
    : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
    throw ImageError("invalid image shape " + std::to_string(w) + "x" + std::to_string(h) +
                     "x" + std::to_string(c));
  }
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void ImageBuffer::validate() const {
  if (channels != 1 && channels != 3) {
    throw ImageError("unsupported channel count " + std::to_string(channels));
  }
  if (width <= 0 || height <= 0 ||
      data.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ImageError("image data length does not match its shape");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw ImageError("image contains non-finite values");
    if (v < 0.0f || v > 1.0f) throw ImageError("image values outside [0, 1]");
  }
}

ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  ImageBuffer out(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const float* p = &img.data[i * 3];
    out.data[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

ImageBuffer gray_to_rgb(const ImageBuffer& img) {
  if (img.channels == 3) return img;
  ImageBuffer out(img.width, img.height, 3);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    out.data[i * 3] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = img.data[i];
  }
  return out;
}

namespace {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_error_fn(png_structp, png_const_charp msg) { throw ImageError(std::string("png: ") + msg); }
void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  img.validate();
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn,
                                            png_warning_fn);
  if (!png) throw ImageError("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError("png: cannot create info struct");
  }

  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
  try {
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
          auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
          buf->insert(buf->end(), data, data + len);
        },
        nullptr);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = to_byte(img.data[static_cast<std::size_t>(y) * row.size() + i]);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw ImageError("not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn,
                                           png_warning_fn);
  if (!png) throw ImageError("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError("png: cannot create info struct");
  }

  ReadCursor cursor{bytes, 0};
  ImageBuffer img;
  try {
    png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t len) {
      auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
      if (c->offset + len > c->bytes.size()) png_error(p, "truncated stream");
      std::memcpy(data, c->bytes.data() + c->offset, len);
      c->offset += len;
    });
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = png_get_channels(png, info);
    if (c != 1 && c != 3) png_error(png, "unsupported channel layout");
    img = ImageBuffer(w, h, c);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int i = 0; i < w * c; ++i) {
        img.data[static_cast<std::size_t>(y) * w * c + i] = row[i] / 255.0f;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ImageError("failed writing " + path.string());
}

ImageBuffer read_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

ImageBuffer quantize8(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (float& v : out.data) v = to_byte(v) / 255.0f;
  return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.data.size() != b.data.size()) throw ImageError("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace paramstyle {

// Incremental SHA-256 producing lowercase hex.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// Git blob id: sha1("blob <len>\0" + content).
std::string git_blob_hash(std::span<const std::uint8_t> bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

// Standard base64 (RFC 4648, padded). Decoding throws std::invalid_argument
// on malformed input.
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "paramstyle/model.hpp"

namespace paramstyle {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an adapter is loaded onto weights it was not trained against.
class FingerprintMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr int kCheckpointVersion = 1;

// Container layout:
//   8 bytes  magic "PSTYLECK"
//   4 bytes  little-endian header length N
//   N bytes  JSON header: version, kind, config, attributes, fingerprint,
//            meta, tensors[{name, shape, offset, numel}], payload_sha256
//   payload  float32 tensor data, concatenated in header order
struct CheckpointHeader {
  int version = kCheckpointVersion;
  std::string kind;  // "bundle" or "adapter"
  DenoiserConfig config;
  std::vector<std::string> attributes;
  std::string frozen_fingerprint;
  nlohmann::json meta = nlohmann::json::object();
};

// Full bundle: prompts, denoiser, control branch and (if present) adapter.
void save_bundle(StyleModel& model, const std::filesystem::path& path,
                 const nlohmann::json& meta = nlohmann::json::object());
// Rebuilds the model from the stored config and verifies the stored
// fingerprint against the loaded frozen weights.
StyleModel load_bundle(const std::filesystem::path& path);

// Adapter-only checkpoint; stores the fingerprint of the frozen weights.
void save_adapter(StyleModel& model, const std::filesystem::path& path,
                  const nlohmann::json& meta = nlohmann::json::object());
// Throws FingerprintMismatch when `model`'s frozen weights differ from those
// the adapter was trained against.
void load_adapter(StyleModel& model, const std::filesystem::path& path);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// Writes bytes to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace paramstyle

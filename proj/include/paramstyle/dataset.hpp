// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paramstyle/filters.hpp"
#include "paramstyle/image.hpp"

namespace paramstyle {

inline constexpr const char* kManifestName = "manifest.jsonl";

// One stylized rendition. Paths are relative to the manifest directory.
struct DatasetRecord {
  std::string content;
  std::string edge;
  std::string stylized;
  FilterParams lambda;
  int prompt_id = 0;
  std::uint64_t seed = 0;

  bool is_baseline() const;  // every strength is zero
  bool operator==(const DatasetRecord&) const = default;
};

struct DatasetSpec {
  std::vector<std::string> attributes;
  int n_content = 1;
  int k_variants = 1;
  std::uint64_t seed = 0;
  int image_size = 32;
  float edge_low = 0.08f;
  float edge_high = 0.2f;
};

struct Manifest {
  std::filesystem::path root;  // directory holding manifest.jsonl
  std::vector<DatasetRecord> records;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

// Renders n_content procedural scenes, their Canny edge maps, one lambda = 0
// rendition and k_variants renditions with strengths drawn from (0, 1) per
// attribute. Writes PNGs and manifest.jsonl under out_dir. Refuses to
// overwrite an existing manifest.
Manifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

std::string record_to_json_line(const DatasetRecord& record);
DatasetRecord record_from_json_line(const std::string& line);

// Loads a manifest file (or a directory containing manifest.jsonl) and
// checks that every referenced file exists.
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/dataset.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "paramstyle/scene.hpp"

namespace paramstyle {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool DatasetRecord::is_baseline() const {
  return std::all_of(lambda.begin(), lambda.end(), [](const auto& kv) { return kv.second == 0.0f; });
}

std::string record_to_json_line(const DatasetRecord& r) {
  json lambda = json::object();
  for (const auto& [name, value] : r.lambda) lambda[name] = value;
  json j{{"content", r.content},     {"edge", r.edge},          {"stylized", r.stylized},
         {"lambda", lambda},         {"prompt_id", r.prompt_id}, {"seed", r.seed}};
  return j.dump();
}

DatasetRecord record_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  DatasetRecord r;
  r.content = j.at("content").get<std::string>();
  r.edge = j.at("edge").get<std::string>();
  r.stylized = j.at("stylized").get<std::string>();
  for (const auto& [name, value] : j.at("lambda").items()) {
    r.lambda[name] = value.get<float>();
  }
  r.prompt_id = j.at("prompt_id").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

Manifest build_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
  if (spec.n_content < 1 || spec.k_variants < 1) {
    throw std::invalid_argument("n_content and k_variants must be >= 1");
  }
  if (spec.attributes.empty()) throw std::invalid_argument("at least one attribute is required");
  for (const auto& a : spec.attributes) {
    if (!is_known_attribute(a)) throw std::invalid_argument("unknown attribute '" + a + "'");
  }
  const fs::path manifest_path = out_dir / kManifestName;
  if (fs::exists(manifest_path)) {
    throw std::runtime_error("manifest already exists: " + manifest_path.string());
  }
  std::error_code ec;
  for (const char* sub : {"content", "edge", "stylized"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw std::runtime_error("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  const int per_content = spec.k_variants + 1;
  std::vector<DatasetRecord> records(static_cast<std::size_t>(spec.n_content) * per_content);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (int i = next++; i < spec.n_content; i = next++) {
      try {
        const std::uint64_t image_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
        const int prompt_id = i % kPromptVocabularySize;
        const ImageBuffer content = generate_scene(prompt_id, image_seed, spec.image_size);
        const ImageBuffer edges = edge_map(content, spec.edge_low, spec.edge_high);
        const std::string stem = std::to_string(i);
        const std::string content_rel = "content/" + stem + ".png";
        const std::string edge_rel = "edge/" + stem + ".png";
        write_png(content, out_dir / content_rel);
        write_png(edges, out_dir / edge_rel);

        std::mt19937_64 rng(mix_seed(image_seed, 0xA11CE));
        std::uniform_real_distribution<float> unit(0.0f, 1.0f);
        for (int v = 0; v < per_content; ++v) {
          DatasetRecord r;
          r.content = content_rel;
          r.edge = edge_rel;
          r.stylized = "stylized/" + stem + "_" + std::to_string(v) + ".png";
          r.prompt_id = prompt_id;
          r.seed = image_seed;
          for (const auto& a : spec.attributes) {
            float value = 0.0f;
            if (v > 0) {
              do value = unit(rng);
              while (value <= 0.0f);
            }
            r.lambda[a] = value;
          }
          write_png(apply_style(content, r.lambda), out_dir / r.stylized);
          records[static_cast<std::size_t>(i) * per_content + v] = std::move(r);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const unsigned n_threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const fs::path tmp = manifest_path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    for (const auto& r : records) f << record_to_json_line(r) << '\n';
  }
  fs::rename(tmp, manifest_path);
  return Manifest{out_dir, std::move(records)};
}

Manifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot open manifest " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    m.records.push_back(record_from_json_line(line));
  }
  for (const auto& r : m.records) {
    for (const auto* p : {&r.content, &r.edge, &r.stylized}) {
      if (!fs::exists(m.resolve(*p))) {
        throw std::runtime_error("manifest references missing file " + *p);
      }
    }
  }
  return m;
}

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>
#include <sstream>

#include "doctest_torch.hpp"
#include "json.hpp"
#include "paramstyle/dataset.hpp"
#include "paramstyle/filters.hpp"
#include "paramstyle/hash.hpp"
#include "paramstyle/scene.hpp"
#include "test_support.hpp"

using namespace paramstyle;
using namespace paramstyle::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.attributes = two_attributes();
  spec.n_content = 2;
  spec.k_variants = 3;
  spec.seed = 99;
  spec.image_size = 32;
  return spec;
}

}  // namespace

TEST_CASE("dataset layout: one baseline plus k variants per content image") {
  const auto dir = scratch_dir("dataset_counts");
  const auto m = build_dataset(small_spec(), dir);
  CHECK(m.records.size() == 8);
  std::set<std::string> edges, stylized;
  int baselines = 0;
  for (const auto& r : m.records) {
    edges.insert(r.edge);
    stylized.insert(r.stylized);
    baselines += r.is_baseline();
    for (const auto& [name, v] : r.lambda) {
      if (!r.is_baseline()) CHECK((v > 0.0f && v < 1.0f));
    }
  }
  CHECK(edges.size() == 2);
  CHECK(stylized.size() == 8);
  CHECK(baselines == 2);

  // Manifest lines carry exactly the documented fields.
  std::ifstream f(dir / "manifest.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    const auto j = nlohmann::json::parse(line);
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"content", "edge", "stylized", "lambda", "prompt_id", "seed"});
    ++lines;
  }
  CHECK(lines == 8);
  CHECK_THROWS(build_dataset(small_spec(), dir));  // refuses to overwrite
  fs::remove_all(dir);
}

TEST_CASE("dataset is bit-identical for the same seed") {
  const auto a = scratch_dir("dataset_a");
  const auto b = scratch_dir("dataset_b");
  const auto ma = build_dataset(small_spec(), a);
  build_dataset(small_spec(), b);
  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
  for (const auto& r : ma.records) {
    CHECK(slurp(a / r.stylized) == slurp(b / r.stylized));
    CHECK(slurp(a / r.content) == slurp(b / r.content));
    CHECK(slurp(a / r.edge) == slurp(b / r.edge));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("stylized images equal the filters re-run on the regenerated content") {
  const auto dir = scratch_dir("dataset_refilter");
  const auto m = build_dataset(small_spec(), dir);
  for (const auto& r : m.records) {
    const auto content = generate_scene(r.prompt_id, r.seed, 32);
    CHECK(read_png(dir / r.content) == quantize8(content));
    CHECK(read_png(dir / r.edge) == edge_map(content));
    ImageBuffer expected = content;
    for (const auto& name : known_attributes()) {
      const auto it = r.lambda.find(name);
      if (it != r.lambda.end()) expected = apply_attribute(expected, name, it->second);
    }
    CHECK(read_png(dir / r.stylized) == quantize8(expected));
    if (r.is_baseline()) CHECK(slurp(dir / r.stylized) == slurp(dir / r.content));
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest round trip and validation") {
  DatasetRecord r{"content/0.png", "edge/0.png", "stylized/0_1.png", {{"blackpoint", 0.25f}}, 3, 77};
  CHECK(record_from_json_line(record_to_json_line(r)) == r);
  auto spec = small_spec();
  spec.attributes = {"sepia"};
  const auto dir = scratch_dir("dataset_bad");
  CHECK_THROWS_AS(build_dataset(spec, dir), std::invalid_argument);
  CHECK_THROWS(load_manifest(dir / "missing.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("scenes: vocabulary size and determinism") {
  CHECK(prompt_vocabulary().size() == static_cast<std::size_t>(kPromptVocabularySize));
  for (int p = 0; p < kPromptVocabularySize; ++p) {
    CHECK(prompt_id_from_text(prompt_vocabulary()[static_cast<std::size_t>(p)]) == p);
    const auto a = generate_scene(p, 5);
    CHECK(a == generate_scene(p, 5));
    CHECK_FALSE(a == generate_scene(p, 6));
    a.validate();
  }
  CHECK(prompt_id_from_text("no such scene") == -1);
}

TEST_CASE("png codec round-trips 8-bit images and base64 round-trips bytes") {
  const auto img = quantize8(random_image(9, 7, 3, 3));
  CHECK(decode_png(encode_png(img)) == img);
  const auto gray = quantize8(random_image(5, 5, 1, 4));
  CHECK(decode_png(encode_png(gray)) == gray);
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 100u}) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 1);
    if (n == 0) {
      CHECK(base64_encode(bytes).empty());
      continue;
    }
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  // RFC 4648 test vectors.
  const std::string foobar = "foobar";
  const std::vector<std::uint8_t> fb(foobar.begin(), foobar.end());
  CHECK(base64_encode(fb) == "Zm9vYmFy");
  CHECK(base64_encode(std::span(fb).first(4)) == "Zm9vYg==");
  CHECK(base64_decode("Zm9vYg==") == std::vector<std::uint8_t>(fb.begin(), fb.begin() + 4));
  CHECK_THROWS_AS(base64_decode("abc"), std::invalid_argument);
  // Git blob id of "hello\n" (git hash-object).
  const std::string hello = "hello\n";
  CHECK(git_blob_hash(std::span(reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size())) ==
        "ce013625030ba8dba906f756967f9e9ca394464a");
}

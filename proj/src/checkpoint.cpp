// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "paramstyle/hash.hpp"

namespace paramstyle {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'S', 'T', 'Y', 'L', 'E', 'C', 'K'};

bool has_prefix(const std::string& name, const char* prefix) { return name.rfind(prefix, 0) == 0; }

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

NamedTensors collect(StyleModel& model, bool adapter_only) {
  NamedTensors out;
  for (const auto& item : model->named_parameters(true)) {
    if (adapter_only && !has_prefix(item.key(), "adapter.")) continue;
    out.emplace_back(item.key(), item.value());
  }
  return out;
}

std::string serialize(const CheckpointHeader& header, const NamedTensors& tensors) {
  std::string payload;
  json entries = json::array();
  for (const auto& [name, tensor] : tensors) {
    const auto v = tensor.detach().to(torch::kFloat).contiguous();
    entries.push_back({{"name", name},
                       {"shape", v.sizes().vec()},
                       {"offset", payload.size()},
                       {"numel", v.numel()}});
    payload.append(static_cast<const char*>(v.data_ptr()),
                   static_cast<std::size_t>(v.numel()) * sizeof(float));
  }
  const json j{{"version", header.version},
               {"kind", header.kind},
               {"config", header.config.to_json()},
               {"attributes", header.attributes},
               {"fingerprint", header.frozen_fingerprint},
               {"meta", header.meta},
               {"tensors", entries},
               {"payload_sha256",
                sha256_hex({reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()})}};
  const std::string text = j.dump();
  std::string out(kMagic, sizeof(kMagic));
  const auto n = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  out += text;
  out += payload;
  return out;
}

struct Parsed {
  CheckpointHeader header;
  json tensors;
  std::string payload;
};

Parsed parse(const fs::path& path, bool with_payload) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  unsigned char len[4];
  if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint container");
  }
  if (!f.read(reinterpret_cast<char*>(len), 4)) throw CheckpointError("truncated checkpoint header");
  const std::uint32_t n = len[0] | (len[1] << 8) | (len[2] << 16) | (static_cast<std::uint32_t>(len[3]) << 24);
  std::string text(n, '\0');
  if (!f.read(text.data(), n)) throw CheckpointError("truncated checkpoint header");
  Parsed p;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  p.header.version = j.at("version").get<int>();
  if (p.header.version > kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(p.header.version) +
                          " is newer than supported version " + std::to_string(kCheckpointVersion));
  }
  p.header.kind = j.at("kind").get<std::string>();
  p.header.config = DenoiserConfig::from_json(j.at("config"));
  p.header.attributes = j.at("attributes").get<std::vector<std::string>>();
  p.header.frozen_fingerprint = j.at("fingerprint").get<std::string>();
  p.header.meta = j.value("meta", json::object());
  p.tensors = j.at("tensors");
  if (with_payload) {
    std::ostringstream rest;
    rest << f.rdbuf();
    p.payload = rest.str();
    const auto digest =
        sha256_hex({reinterpret_cast<const std::uint8_t*>(p.payload.data()), p.payload.size()});
    if (digest != j.at("payload_sha256").get<std::string>()) {
      throw CheckpointError("checkpoint payload hash mismatch (corrupt file?)");
    }
  }
  return p;
}

void restore(StyleModel& model, const Parsed& p, bool adapter_only) {
  auto params = model->named_parameters(true);
  std::size_t expected = 0;
  for (const auto& item : params) {
    if (!adapter_only || has_prefix(item.key(), "adapter.")) ++expected;
  }
  if (p.tensors.size() != expected) {
    throw CheckpointError("checkpoint tensor count " + std::to_string(p.tensors.size()) +
                          " does not match model (" + std::to_string(expected) + ")");
  }
  torch::NoGradGuard no_grad;
  for (const auto& e : p.tensors) {
    const auto name = e.at("name").get<std::string>();
    auto* dst = params.find(name);
    if (dst == nullptr) throw CheckpointError("unexpected tensor '" + name + "' in checkpoint");
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    if (!dst->sizes().equals(shape)) throw CheckpointError("shape mismatch for '" + name + "'");
    const auto offset = e.at("offset").get<std::size_t>();
    const auto numel = e.at("numel").get<std::size_t>();
    if (offset + numel * sizeof(float) > p.payload.size()) {
      throw CheckpointError("tensor '" + name + "' extends past payload");
    }
    auto src = torch::from_blob(const_cast<char*>(p.payload.data() + offset), shape, torch::kFloat);
    dst->copy_(src);
  }
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_bundle(StyleModel& model, const fs::path& path, const json& meta) {
  CheckpointHeader h;
  h.kind = "bundle";
  h.config = model->config();
  h.attributes = model->attributes();
  h.frozen_fingerprint = model->frozen_fingerprint();
  h.meta = meta;
  write_file_atomic(path, serialize(h, collect(model, false)));
}

StyleModel load_bundle(const fs::path& path) {
  const Parsed p = parse(path, true);
  if (p.header.kind != "bundle") throw CheckpointError(path.string() + " is not a model bundle");
  StyleModel model(p.header.config, p.header.attributes);
  restore(model, p, false);
  if (model->frozen_fingerprint() != p.header.frozen_fingerprint) {
    throw FingerprintMismatch("bundle weights do not match their stored fingerprint");
  }
  model->eval();
  // Inference bundles start fully frozen; training re-enables its phase.
  for (auto& param : model->parameters()) param.set_requires_grad(false);
  return model;
}

void save_adapter(StyleModel& model, const fs::path& path, const json& meta) {
  if (!model->has_adapter()) throw CheckpointError("model has no adapter to save");
  CheckpointHeader h;
  h.kind = "adapter";
  h.config = model->config();
  h.attributes = model->attributes();
  h.frozen_fingerprint = model->frozen_fingerprint();
  h.meta = meta;
  write_file_atomic(path, serialize(h, collect(model, true)));
}

void load_adapter(StyleModel& model, const fs::path& path) {
  const Parsed p = parse(path, true);
  if (p.header.kind != "adapter") throw CheckpointError(path.string() + " is not an adapter checkpoint");
  if (!(p.header.config == model->config()) || p.header.attributes != model->attributes()) {
    throw CheckpointError("adapter config/attributes do not match the model");
  }
  if (p.header.frozen_fingerprint != model->frozen_fingerprint()) {
    throw FingerprintMismatch("adapter was trained against different frozen weights");
  }
  restore(model, p, true);
}

CheckpointHeader read_checkpoint_header(const fs::path& path) { return parse(path, false).header; }

}  // namespace paramstyle

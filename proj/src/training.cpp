// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "paramstyle/checkpoint.hpp"
#include "paramstyle/convert.hpp"
#include "paramstyle/filters.hpp"

namespace paramstyle {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("train: beta must be >= 0");
  if (!(prompt_dropout >= 0.0 && prompt_dropout <= 1.0)) {
    throw std::invalid_argument("train: prompt_dropout must lie in [0, 1]");
  }
  if (!(act_t >= 0.0 && act_t < 1.0)) throw std::invalid_argument("train: act_t must lie in [0, 1)");
  if (checkpoint_every < 0) throw std::invalid_argument("train: checkpoint_every must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"steps", steps},   {"batch_size", batch_size},         {"lr", lr},
          {"beta", beta},     {"prompt_dropout", prompt_dropout}, {"act_free", act_free},
          {"act_t", act_t},   {"flip", flip},                     {"seed", seed},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.beta = j.value("beta", c.beta);
  c.prompt_dropout = j.value("prompt_dropout", c.prompt_dropout);
  c.act_free = j.value("act_free", c.act_free);
  c.act_t = j.value("act_t", c.act_t);
  c.flip = j.value("flip", c.flip);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- data

TrainingData load_training_data(const Manifest& manifest) {
  if (manifest.records.empty()) throw std::invalid_argument("training data: manifest is empty");
  // Group by content path, keeping first-seen order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const DatasetRecord*>> groups;
  for (const auto& r : manifest.records) {
    auto [it, inserted] = groups.try_emplace(r.content);
    if (inserted) order.push_back(r.content);
    it->second.push_back(&r);
  }
  TrainingData data;
  for (const auto& [name, value] : manifest.records.front().lambda) data.attributes.push_back(name);
  // Canonical attribute order, matching apply_style.
  std::vector<std::string> canonical;
  for (const auto& a : known_attributes()) {
    if (std::find(data.attributes.begin(), data.attributes.end(), a) != data.attributes.end()) {
      canonical.push_back(a);
    }
  }
  data.attributes = canonical;

  const std::size_t variants = groups[order.front()].size();
  std::vector<torch::Tensor> content, edges, stylized, lambdas;
  for (const auto& key : order) {
    auto& recs = groups[key];
    if (recs.size() != variants) {
      throw std::invalid_argument("training data: content '" + key + "' has " +
                                  std::to_string(recs.size()) + " variants, expected " +
                                  std::to_string(variants));
    }
    // Baseline first, remaining variants in manifest order.
    std::stable_partition(recs.begin(), recs.end(), [](const DatasetRecord* r) { return r->is_baseline(); });
    if (!recs.front()->is_baseline()) {
      throw std::invalid_argument("training data: content '" + key + "' lacks a lambda = 0 rendition");
    }
    content.push_back(image_to_latent(read_png(manifest.resolve(key))));
    edges.push_back(edge_to_hint(read_png(manifest.resolve(recs.front()->edge))));
    std::vector<torch::Tensor> sty, lam;
    for (const auto* r : recs) {
      if (r->lambda.size() != data.attributes.size()) {
        throw std::invalid_argument("training data: inconsistent attribute sets");
      }
      sty.push_back(image_to_latent(read_png(manifest.resolve(r->stylized))));
      std::vector<float> values;
      for (const auto& a : data.attributes) values.push_back(r->lambda.at(a));
      lam.push_back(torch::tensor(values));
    }
    stylized.push_back(torch::stack(sty));
    lambdas.push_back(torch::stack(lam));
    data.prompt_ids.push_back(recs.front()->prompt_id);
  }
  data.content = torch::stack(content);
  data.edges = torch::stack(edges);
  data.stylized = torch::stack(stylized);
  data.lambdas = torch::stack(lambdas);
  return data;
}

void PairedBatch::validate() const {
  if (!z0_k.defined() || z0_k.dim() != 4) throw std::invalid_argument("pair: z0_k must be [B, C, H, W]");
  const auto b = z0_k.size(0);
  if (!z0_0.sizes().equals(z0_k.sizes()) || !eps.sizes().equals(z0_k.sizes())) {
    throw std::invalid_argument("pair: z0_k, z0_0 and eps must share a shape");
  }
  if (t.dim() != 1 || t.size(0) != b) throw std::invalid_argument("pair: one timestep per sample");
  if (lambda.dim() != 2 || lambda.size(0) != b) throw std::invalid_argument("pair: lambda must be [B, n]");
  if (edge.dim() != 4 || edge.size(0) != b || edge.size(2) != z0_k.size(2) || edge.size(3) != z0_k.size(3)) {
    throw std::invalid_argument("pair: edge map must be [B, 1, H, W]");
  }
  if (static_cast<std::int64_t>(prompt_ids.size()) != b) {
    throw std::invalid_argument("pair: one prompt id per sample");
  }
}

PairedBatch sample_pairs(const TrainingData& data, int batch, std::mt19937_64& rng,
                         const NoiseSchedule& schedule, bool flip, int t_max) {
  if (data.variants() < 2) throw std::invalid_argument("pairs need at least one stylized variant");
  std::uniform_int_distribution<std::int64_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<std::int64_t> variant(1, data.variants() - 1);
  std::uniform_int_distribution<int> step(0, std::min(t_max, schedule.steps()) - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<torch::Tensor> zk, z0, edges, lam;
  std::vector<std::int64_t> ts;
  PairedBatch p;
  for (int b = 0; b < batch; ++b) {
    const auto i = pick(rng);
    const auto v = variant(rng);
    auto a = data.stylized[i][v];
    auto c = data.stylized[i][0];
    auto e = data.edges[i];
    if (flip && coin(rng)) {
      a = a.flip({-1});
      c = c.flip({-1});
      e = e.flip({-1});
    }
    zk.push_back(a);
    z0.push_back(c);
    edges.push_back(e);
    lam.push_back(data.lambdas[i][v]);
    ts.push_back(step(rng));
    p.prompt_ids.push_back(data.prompt_ids[static_cast<std::size_t>(i)]);
  }
  p.z0_k = torch::stack(zk);
  p.z0_0 = torch::stack(z0);
  p.edge = torch::stack(edges);
  p.lambda = torch::stack(lam);
  p.t = torch::tensor(ts, torch::kLong);
  p.eps = torch::randn_like(p.z0_k);
  return p;
}

// ---------------------------------------------------------------- losses

torch::Tensor diffusion_loss(const torch::Tensor& eps, const torch::Tensor& eps_hat) {
  if (!eps.sizes().equals(eps_hat.sizes())) throw std::invalid_argument("diffusion_loss: shape mismatch");
  return (eps - eps_hat).pow(2).mean();
}

torch::Tensor reg_loss_from_predictions(const torch::Tensor& z_t, const torch::Tensor& eps_k,
                                        const torch::Tensor& eps_0, const PairedBatch& pair,
                                        const NoiseSchedule& schedule) {
  if (!eps_k.sizes().equals(eps_0.sizes()) || !eps_k.sizes().equals(z_t.sizes())) {
    throw std::invalid_argument("reg_loss: shape mismatch");
  }
  const auto t_prev = pair.t - 1;
  const auto step_k = ddim_step(z_t, eps_k, pair.t, t_prev, schedule);
  const auto step_0 = ddim_step(z_t, eps_0, pair.t, t_prev, schedule);
  const auto denom = 1.0 + (pair.z0_k - pair.z0_0).abs();
  return ((step_k - step_0) / denom).pow(2).mean();
}

namespace {

// eps_A for lambda_k and (optionally) lambda = 0, batched into one call.
std::pair<torch::Tensor, torch::Tensor> adapter_predictions(StyleModel& model, const torch::Tensor& z_t,
                                                            const PairedBatch& pair, bool both) {
  const auto ctx = model->context(pair.prompt_ids);
  if (!both) {
    const auto tokens = model->embed_lambda(pair.lambda);
    return {model->adapter_forward(z_t, pair.t, pair.edge, tokens, ctx), {}};
  }
  const auto lambda = torch::cat({pair.lambda, torch::zeros_like(pair.lambda)});
  const auto tokens = model->embed_lambda(lambda);
  const auto eps = model->adapter_forward(torch::cat({z_t, z_t}), torch::cat({pair.t, pair.t}),
                                          torch::cat({pair.edge, pair.edge}), tokens,
                                          torch::cat({ctx, ctx}));
  const auto b = z_t.size(0);
  return {eps.slice(0, 0, b), eps.slice(0, b)};
}

}  // namespace

torch::Tensor reg_loss(StyleModel& model, const PairedBatch& pair) {
  pair.validate();
  const auto& schedule = model->schedule();
  const auto z_t = add_noise(pair.z0_k, pair.eps, pair.t, schedule);
  const auto [eps_k, eps_0] = adapter_predictions(model, z_t, pair, true);
  return reg_loss_from_predictions(z_t, eps_k, eps_0, pair, schedule);
}

AdapterLoss adapter_loss(StyleModel& model, const PairedBatch& pair, double beta) {
  pair.validate();
  if (!(beta >= 0.0)) throw std::invalid_argument("adapter_loss: beta must be >= 0");
  const auto& schedule = model->schedule();
  const auto z_t = add_noise(pair.z0_k, pair.eps, pair.t, schedule);
  AdapterLoss out;
  if (beta == 0.0) {
    const auto [eps_k, unused] = adapter_predictions(model, z_t, pair, false);
    out.diffusion = diffusion_loss(pair.eps, eps_k);
    out.total = out.diffusion;
    return out;
  }
  const auto [eps_k, eps_0] = adapter_predictions(model, z_t, pair, true);
  out.diffusion = diffusion_loss(pair.eps, eps_k);
  out.reg = reg_loss_from_predictions(z_t, eps_k, eps_0, pair, schedule);
  out.total = out.diffusion + out.reg * beta;
  return out;
}

// ---------------------------------------------------------------- loops

void write_loss_csv(const std::vector<LossRecord>& losses, const fs::path& path) {
  std::ostringstream out;
  out << "step,diffusion_loss,reg_loss,total\n";
  out.precision(9);
  for (const auto& r : losses) {
    out << r.step << ',' << r.diffusion << ',';
    if (r.reg) out << *r.reg;
    out << ',' << r.total << '\n';
  }
  write_file_atomic(path, out.str());
}

namespace {

// In-memory copy of the trainable tensors so a divergent step can be undone.
struct Snapshot {
  std::vector<torch::Tensor> values;

  void take(const std::vector<torch::Tensor>& params) {
    values.clear();
    for (const auto& p : params) values.push_back(p.detach().clone());
  }
  void restore(const std::vector<torch::Tensor>& params) const {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(values[i]);
  }
};

bool finite(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

}  // namespace

TrainResult train_base(StyleModel& model, const TrainingData& data, const TrainConfig& cfg,
                       Phase phase, const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  if (phase == Phase::kAdapter) throw std::invalid_argument("train_base: use train_adapter for the adapter");
  if (data.size() == 0) throw std::invalid_argument("train_base: empty dataset");
  fs::create_directories(out_dir);
  torch::manual_seed(cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::int64_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> step_dist(0, model->schedule().steps() - 1);
  std::bernoulli_distribution drop(cfg.prompt_dropout);
  std::bernoulli_distribution coin(0.5);

  model->train();
  model->set_trainable(phase);
  const auto params = model->trainable_parameters(phase);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.lr));
  const bool use_control = phase == Phase::kControl;
  const fs::path ckpt = out_dir / (to_string(phase) + ".ckpt");

  TrainResult result;
  Snapshot good;
  good.take(params);
  for (int s = 1; s <= cfg.steps; ++s) {
    std::vector<torch::Tensor> zs, hs;
    std::vector<std::int64_t> ts;
    std::vector<int> ids;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto i = pick(rng);
      auto z = data.content[i];
      auto h = data.edges[i];
      if (cfg.flip && coin(rng)) {
        z = z.flip({-1});
        h = h.flip({-1});
      }
      zs.push_back(z);
      hs.push_back(h);
      ts.push_back(step_dist(rng));
      ids.push_back(drop(rng) ? -1 : data.prompt_ids[static_cast<std::size_t>(i)]);
    }
    const auto z0 = torch::stack(zs);
    const auto t = torch::tensor(ts, torch::kLong);
    const auto eps = torch::randn_like(z0);
    const auto z_t = add_noise(z0, eps, t, model->schedule());
    const auto ctx = model->context(ids);
    torch::Tensor eps_hat;
    if (use_control) {
      const auto features = model->control_features(torch::stack(hs), z_t, t, ctx);
      eps_hat = model->denoise_base(z_t, t, ctx, &features);
    } else {
      eps_hat = model->denoise_base(z_t, t, ctx);
    }
    const auto loss = diffusion_loss(eps, eps_hat);
    if (!finite(loss)) {
      good.restore(params);
      result.aborted = true;
      result.abort_reason = "non-finite loss at step " + std::to_string(s);
      break;
    }
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();

    LossRecord rec{s, loss.item<double>(), std::nullopt, loss.item<double>()};
    result.losses.push_back(rec);
    if (progress) progress(rec);
    if (cfg.checkpoint_every > 0 && (s % cfg.checkpoint_every == 0) && s != cfg.steps) {
      save_bundle(model, ckpt, {{"phase", to_string(phase)}, {"step", s}, {"train", cfg.to_json()}});
      result.checkpoint = ckpt;
      good.take(params);
    }
  }
  if (!result.aborted) {
    save_bundle(model, ckpt, {{"phase", to_string(phase)}, {"step", cfg.steps}, {"train", cfg.to_json()}});
    result.checkpoint = ckpt;
  }
  write_loss_csv(result.losses, out_dir / (to_string(phase) + "_loss.csv"));
  model->eval();
  return result;
}

TrainResult train_adapter(StyleModel& model, const TrainingData& data, const TrainConfig& cfg,
                          const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  if (!model->has_adapter()) throw std::invalid_argument("train_adapter: model has no adapter");
  if (data.attributes != model->attributes()) {
    throw std::invalid_argument("train_adapter: dataset attributes do not match the model");
  }
  fs::create_directories(out_dir);
  torch::manual_seed(cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  const auto& schedule = model->schedule();
  const int t_max = cfg.act_free ? schedule.steps()
                                 : static_cast<int>(std::floor((1.0 - cfg.act_t) * schedule.steps())) + 1;

  // Dropout-free forward passes; only adapter weights receive gradients.
  model->eval();
  model->set_trainable(Phase::kAdapter);
  const auto params = model->trainable_parameters(Phase::kAdapter);
  const std::string fingerprint = model->frozen_fingerprint();
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.lr));
  const fs::path ckpt = out_dir / "adapter.ckpt";
  const json meta_base{{"train", cfg.to_json()}};

  TrainResult result;
  Snapshot good;
  good.take(params);
  auto save = [&](int step) {
    if (model->frozen_fingerprint() != fingerprint) {
      throw std::runtime_error("frozen weights changed during adapter training");
    }
    json meta = meta_base;
    meta["step"] = step;
    save_adapter(model, ckpt, meta);
    result.checkpoint = ckpt;
    good.take(params);
  };
  for (int s = 1; s <= cfg.steps; ++s) {
    const auto pair = sample_pairs(data, cfg.batch_size, rng, schedule, cfg.flip, t_max);
    const auto loss = adapter_loss(model, pair, cfg.beta);
    if (!finite(loss.total)) {
      good.restore(params);
      result.aborted = true;
      result.abort_reason = "non-finite loss at step " + std::to_string(s);
      break;
    }
    optimizer.zero_grad();
    loss.total.backward();
    optimizer.step();

    LossRecord rec{s, loss.diffusion.item<double>(), std::nullopt, loss.total.item<double>()};
    if (loss.reg.defined()) rec.reg = loss.reg.item<double>();
    result.losses.push_back(rec);
    if (progress) progress(rec);
    if (cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0 && s != cfg.steps) {
      try {
        save(s);
      } catch (const std::runtime_error& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        break;
      }
    }
  }
  if (!result.aborted) {
    try {
      save(cfg.steps);
    } catch (const std::runtime_error& e) {
      result.aborted = true;
      result.abort_reason = e.what();
    }
  }
  write_loss_csv(result.losses, out_dir / "adapter_loss.csv");
  return result;
}

}  // namespace paramstyle

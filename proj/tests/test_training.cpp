// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest_torch.hpp"
#include "paramstyle/checkpoint.hpp"
#include "paramstyle/dataset.hpp"
#include "paramstyle/training.hpp"
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

// alpha_bar_t for the linear schedule, accumulated in long double.
double oracle_alpha_bar(int t, int T = 1000, double lo = 1e-4, double hi = 0.02) {
  long double prod = 1.0L;
  for (int s = 0; s <= t; ++s) prod *= 1.0L - (lo + (hi - lo) * s / (T - 1.0));
  return static_cast<double>(prod);
}

// One deterministic DDIM step written out per element.
double oracle_ddim(double z, double eps, int t) {
  const double a = oracle_alpha_bar(t);
  const double ap = t == 0 ? 1.0 : oracle_alpha_bar(t - 1);
  const double x0 = (z - std::sqrt(1 - a) * eps) / std::sqrt(a);
  return std::sqrt(ap) * x0 + std::sqrt(1 - ap) * eps;
}

struct Fixture {
  fs::path dir;
  TrainingData data;

  Fixture() : dir(scratch_dir("training")) {
    DatasetSpec spec;
    spec.attributes = two_attributes();
    spec.n_content = 3;
    spec.k_variants = 2;
    spec.seed = 4;
    spec.image_size = 8;
    data = load_training_data(build_dataset(spec, dir / "data"));
  }
  ~Fixture() { fs::remove_all(dir); }
};

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.seed = 8;
  cfg.checkpoint_every = 0;
  return cfg;
}

std::map<std::string, torch::Tensor> snapshot(StyleModel& model) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : model->named_parameters()) out[p.key()] = p.value().detach().clone();
  return out;
}

}  // namespace

TEST_CASE("regularizer on a 2x2 hand example") {
  PairedBatch pair;
  pair.z0_k = torch::tensor({0.5, -0.2, 0.9, 0.0}, torch::kDouble).view({1, 1, 2, 2});
  pair.z0_0 = torch::tensor({0.5, 0.3, -0.1, 0.0}, torch::kDouble).view({1, 1, 2, 2});
  pair.eps = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  pair.t = torch::tensor({250}, torch::kLong);
  pair.lambda = torch::ones({1, 2}, torch::kDouble);
  pair.edge = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  pair.prompt_ids = {0};
  const auto z_t = torch::tensor({0.1, 0.4, -0.3, 0.8}, torch::kDouble).view({1, 1, 2, 2});
  const auto eps_k = torch::tensor({0.2, -0.5, 1.0, 0.3}, torch::kDouble).view({1, 1, 2, 2});
  const auto eps_0 = torch::tensor({0.1, 0.5, -1.0, 0.3}, torch::kDouble).view({1, 1, 2, 2});
  const auto schedule = make_schedule(1000);

  double expected = 0;
  for (int i = 0; i < 4; ++i) {
    const double zt = z_t.view(-1)[i].item<double>();
    const double dk = oracle_ddim(zt, eps_k.view(-1)[i].item<double>(), 250);
    const double d0 = oracle_ddim(zt, eps_0.view(-1)[i].item<double>(), 250);
    const double denom = 1 + std::fabs(pair.z0_k.view(-1)[i].item<double>() - pair.z0_0.view(-1)[i].item<double>());
    expected += std::pow((dk - d0) / denom, 2) / 4;
  }
  const double got = reg_loss_from_predictions(z_t, eps_k, eps_0, pair, schedule).item<double>();
  CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected > 0);

  // Identical predictions give zero; identical clean images give denominator 1.
  CHECK(reg_loss_from_predictions(z_t, eps_k, eps_k, pair, schedule).item<double>() == 0.0);
  pair.z0_0 = pair.z0_k.clone();
  double plain = 0;
  for (int i = 0; i < 4; ++i) {
    const double zt = z_t.view(-1)[i].item<double>();
    plain += std::pow(oracle_ddim(zt, eps_k.view(-1)[i].item<double>(), 250) -
                          oracle_ddim(zt, eps_0.view(-1)[i].item<double>(), 250),
                      2) / 4;
  }
  CHECK(reg_loss_from_predictions(z_t, eps_k, eps_0, pair, schedule).item<double>() ==
        doctest::Approx(plain).epsilon(1e-9));
  CHECK_THROWS_AS(reg_loss_from_predictions(z_t, eps_k, eps_0.view({1, 4, 1, 1}), pair, schedule),
                  std::invalid_argument);
}

TEST_CASE("diffusion loss is the mean squared error") {
  const auto a = torch::tensor({1.0, 2.0, 3.0, 4.0}, torch::kDouble);
  const auto b = torch::tensor({1.5, 2.0, 1.0, 4.0}, torch::kDouble);
  CHECK(diffusion_loss(a, b).item<double>() == doctest::Approx((0.25 + 4.0) / 4));
  CHECK_THROWS_AS(diffusion_loss(a, b.view({2, 2})), std::invalid_argument);
}

TEST_CASE("training data groups variants behind their baseline") {
  Fixture fx;
  CHECK(fx.data.size() == 3);
  CHECK(fx.data.variants() == 3);
  CHECK(fx.data.attributes == two_attributes());
  CHECK(fx.data.stylized.sizes() == torch::IntArrayRef({3, 3, 3, 8, 8}));
  CHECK(fx.data.edges.sizes() == torch::IntArrayRef({3, 1, 8, 8}));
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(fx.data.lambdas[i][0].abs().max().item<double>() == 0.0);
    CHECK(torch::equal(fx.data.stylized[i][0], fx.data.content[i]));
    for (std::int64_t v = 1; v < 3; ++v) CHECK(fx.data.lambdas[i][v].min().item<double>() > 0.0);
  }

  const auto schedule = make_schedule(1000);
  std::mt19937_64 rng(3);
  const auto pair = sample_pairs(fx.data, 16, rng, schedule, false, 100);
  pair.validate();
  CHECK(pair.t.max().item<std::int64_t>() < 100);
  CHECK(pair.lambda.min().item<double>() > 0.0);
  std::mt19937_64 rng2(3);
  const auto again = sample_pairs(fx.data, 16, rng2, schedule, false, 100);
  CHECK(torch::equal(pair.z0_k, again.z0_k));
  CHECK(torch::equal(pair.t, again.t));
}

TEST_CASE("zero learning rate leaves every weight unchanged") {
  Fixture fx;
  auto model = make_model(micro_config(8), two_attributes(), 1);
  const auto before = snapshot(model);
  auto cfg = tiny_config();
  cfg.lr = 0.0;
  const auto r = train_base(model, fx.data, cfg, Phase::kBase, fx.dir / "run");
  CHECK_FALSE(r.aborted);
  CHECK(r.losses.size() == 3);
  for (const auto& [name, value] : snapshot(model)) CHECK_MESSAGE(torch::equal(value, before.at(name)), name);
}

TEST_CASE("prompt dropout decides whether the null embedding trains") {
  Fixture fx;
  auto cfg = tiny_config();
  cfg.prompt_dropout = 0.0;
  auto model = make_model(micro_config(8), two_attributes(), 2);
  const auto null0 = model->prompts->null_embedding.detach().clone();
  const auto table0 = model->prompts->table.detach().clone();
  train_base(model, fx.data, cfg, Phase::kBase, fx.dir / "keep");
  CHECK(torch::equal(model->prompts->null_embedding, null0));
  CHECK_FALSE(torch::equal(model->prompts->table, table0));

  cfg.prompt_dropout = 1.0;
  auto dropped = make_model(micro_config(8), two_attributes(), 2);
  train_base(dropped, fx.data, cfg, Phase::kBase, fx.dir / "drop");
  CHECK_FALSE(torch::equal(dropped->prompts->null_embedding, null0));
  CHECK(torch::equal(dropped->prompts->table, table0));
}

TEST_CASE("control training moves only the control branch") {
  Fixture fx;
  auto model = make_model(micro_config(8), two_attributes(), 3);
  const auto before = snapshot(model);
  const auto fingerprint = model->frozen_fingerprint();
  train_base(model, fx.data, tiny_config(), Phase::kControl, fx.dir / "control");
  bool control_moved = false;
  for (const auto& [name, value] : snapshot(model)) {
    if (name.rfind("control.", 0) == 0) {
      control_moved |= !torch::equal(value, before.at(name));
    } else {
      CHECK_MESSAGE(torch::equal(value, before.at(name)), name);
    }
  }
  CHECK(control_moved);
  CHECK(model->frozen_fingerprint() != fingerprint);  // control weights are part of the frozen set
  CHECK(fs::exists(fx.dir / "control" / "control.ckpt"));
}

TEST_CASE("training is deterministic and writes loss logs and checkpoints") {
  Fixture fx;
  auto cfg = tiny_config();
  cfg.checkpoint_every = 2;
  auto a = make_model(micro_config(8), two_attributes(), 4);
  auto b = make_model(micro_config(8), two_attributes(), 4);
  const auto ra = train_base(a, fx.data, cfg, Phase::kBase, fx.dir / "a");
  const auto rb = train_base(b, fx.data, cfg, Phase::kBase, fx.dir / "b");
  REQUIRE(ra.losses.size() == rb.losses.size());
  for (std::size_t i = 0; i < ra.losses.size(); ++i) CHECK(ra.losses[i].total == rb.losses[i].total);
  CHECK(slurp(fx.dir / "a" / "base.ckpt") == slurp(fx.dir / "b" / "base.ckpt"));

  std::ifstream csv(fx.dir / "a" / "base_loss.csv");
  std::string header, row;
  std::getline(csv, header);
  CHECK(header == "step,diffusion_loss,reg_loss,total");
  int rows = 0;
  while (std::getline(csv, row)) ++rows;
  CHECK(rows == 3);
  CHECK(read_checkpoint_header(fx.dir / "a" / "base.ckpt").meta["step"] == 3);
}

TEST_CASE("adapter training leaves the frozen weights untouched") {
  Fixture fx;
  auto model = make_model(micro_config(8), two_attributes(), 5);
  // The adapter acts through the control branch, whose zero projections must
  // be live (as after control training) for it to receive gradients.
  {
    torch::NoGradGuard no_grad;
    for (auto& conv : model->control->zero_convs) conv->weight.normal_(0.0, 0.05);
    model->control->zero_mid->weight.normal_(0.0, 0.05);
  }
  const auto fingerprint = model->frozen_fingerprint();
  const auto before = snapshot(model);
  auto cfg = tiny_config();
  cfg.beta = 5.0;
  const auto r = train_adapter(model, fx.data, cfg, fx.dir / "adapter");
  CHECK_FALSE(r.aborted);
  CHECK(model->frozen_fingerprint() == fingerprint);
  bool adapter_moved = false;
  for (const auto& [name, value] : snapshot(model)) {
    if (name.rfind("adapter.", 0) == 0) {
      adapter_moved |= !torch::equal(value, before.at(name));
    } else {
      CHECK_MESSAGE(torch::equal(value, before.at(name)), name);
    }
  }
  CHECK(adapter_moved);
  for (const auto& rec : r.losses) {
    REQUIRE(rec.reg.has_value());
    CHECK(rec.total == doctest::Approx(rec.diffusion + 5.0 * *rec.reg).epsilon(1e-5));
  }
  CHECK(read_checkpoint_header(fx.dir / "adapter" / "adapter.ckpt").frozen_fingerprint == fingerprint);

  cfg.beta = 0.0;
  const auto r0 = train_adapter(model, fx.data, cfg, fx.dir / "adapter0");
  for (const auto& rec : r0.losses) CHECK_FALSE(rec.reg.has_value());
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  cfg.validate();
  CHECK(TrainConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  cfg.prompt_dropout = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.checkpoint_every = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  Fixture fx;
  auto model = make_model(micro_config(8), two_attributes(), 6);
  CHECK_THROWS_AS(train_base(model, fx.data, tiny_config(), Phase::kAdapter, fx.dir / "x"),
                  std::invalid_argument);
  auto no_adapter = make_model(micro_config(8), {}, 6);
  CHECK_THROWS_AS(train_adapter(no_adapter, fx.data, tiny_config(), fx.dir / "y"), std::invalid_argument);
}

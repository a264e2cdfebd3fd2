// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/recipe.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "paramstyle/checkpoint.hpp"
#include "paramstyle/filters.hpp"

namespace paramstyle {

namespace fs = std::filesystem;

DeskRecipe DeskRecipe::standard() {
  DeskRecipe r;
  r.dataset.attributes = {std::string(kContourWidth), std::string(kBlackpoint)};
  r.dataset.n_content = 512;
  r.dataset.k_variants = 8;
  r.dataset.seed = 2026;

  // Half-width version of the default shape so the pipeline fits one CPU core.
  r.model.base_channels = 32;
  r.model.time_embed_dim = 128;

  r.base.steps = 10000;
  r.base.batch_size = 16;
  r.base.lr = 3e-4;
  r.base.seed = 11;
  r.base.checkpoint_every = 1000;

  r.control = r.base;
  r.control.steps = 5000;
  r.control.seed = 12;

  r.adapter.steps = 5000;
  r.adapter.batch_size = 8;
  r.adapter.lr = 1e-4;
  r.adapter.beta = 5.0;
  r.adapter.seed = 13;
  r.adapter.checkpoint_every = 1000;

  r.adapter_no_reg = r.adapter;
  r.adapter_no_reg.beta = 0.0;
  return r;
}

namespace {

bool done(const fs::path& dir) { return fs::exists(dir / "DONE"); }

void mark_done(const fs::path& dir, const std::string& note) {
  std::ofstream(dir / "DONE") << note << '\n';
}

ProgressFn progress_logger(const LogFn& log, const std::string& stage, int total) {
  if (!log) return {};
  auto start = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
  return [log, stage, total, start](const LossRecord& r) {
    if (r.step % 100 != 0 && r.step != total) return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - *start).count();
    std::ostringstream msg;
    msg << stage << " step " << r.step << '/' << total << " loss " << r.total;
    if (r.reg) msg << " reg " << *r.reg;
    msg << " (" << static_cast<int>(secs) << " s)";
    log(msg.str());
  };
}

void run_adapter(const DeskArtifacts& a, const fs::path& dir, const TrainConfig& cfg,
                 const TrainingData& data, const LogFn& log, const std::string& name) {
  if (done(dir)) return;
  auto model = load_bundle(a.bundle());
  const auto result = train_adapter(model, data, cfg, dir, progress_logger(log, name, cfg.steps));
  if (result.aborted) throw std::runtime_error(name + " training aborted: " + result.abort_reason);
  mark_done(dir, name);
}

}  // namespace

DeskArtifacts ensure_desk_artifacts(const fs::path& root, const DeskRecipe& recipe, const LogFn& log) {
  DeskArtifacts a{root};
  fs::create_directories(root);
  if (!done(a.dataset())) {
    if (log) log("building dataset");
    fs::remove_all(a.dataset());
    build_dataset(recipe.dataset, a.dataset());
    mark_done(a.dataset(), "dataset");
  }
  const auto data = load_training_data(load_manifest(a.dataset()));

  if (!done(a.base_dir())) {
    auto model = make_model(recipe.model, data.attributes, recipe.init_seed);
    const auto result = train_base(model, data, recipe.base, Phase::kBase, a.base_dir(),
                                   progress_logger(log, "base", recipe.base.steps));
    if (result.aborted) throw std::runtime_error("base training aborted: " + result.abort_reason);
    mark_done(a.base_dir(), "base");
  }
  if (!done(a.control_dir())) {
    auto model = load_bundle(a.base_dir() / "base.ckpt");
    model->init_control_from_base();
    const auto result = train_base(model, data, recipe.control, Phase::kControl, a.control_dir(),
                                   progress_logger(log, "control", recipe.control.steps));
    if (result.aborted) throw std::runtime_error("control training aborted: " + result.abort_reason);
    mark_done(a.control_dir(), "control");
  }
  run_adapter(a, a.adapter_dir(), recipe.adapter, data, log, "adapter(beta=5)");
  run_adapter(a, a.adapter_no_reg_dir(), recipe.adapter_no_reg, data, log, "adapter(beta=0)");
  return a;
}

}  // namespace paramstyle

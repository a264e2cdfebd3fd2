// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "paramstyle/dataset.hpp"
#include "paramstyle/model.hpp"
#include "paramstyle/training.hpp"

namespace paramstyle {

// The reference desk-scale pipeline: toy dataset, model shape and the three
// training stages. Everything downstream (acceptance runs, examples) reads
// the artifacts this produces.
struct DeskRecipe {
  DatasetSpec dataset;
  DenoiserConfig model;
  std::uint64_t init_seed = 7;
  TrainConfig base;
  TrainConfig control;
  TrainConfig adapter;          // beta = 5
  TrainConfig adapter_no_reg;   // identical except beta = 0

  static DeskRecipe standard();
};

struct DeskArtifacts {
  std::filesystem::path root;
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path base_dir() const { return root / "base"; }
  std::filesystem::path control_dir() const { return root / "control"; }
  std::filesystem::path adapter_dir() const { return root / "adapter_beta5"; }
  std::filesystem::path adapter_no_reg_dir() const { return root / "adapter_beta0"; }
  std::filesystem::path bundle() const { return control_dir() / "control.ckpt"; }
  std::filesystem::path adapter() const { return adapter_dir() / "adapter.ckpt"; }
  std::filesystem::path adapter_no_reg() const { return adapter_no_reg_dir() / "adapter.ckpt"; }
};

using LogFn = std::function<void(const std::string&)>;

// Builds whatever is missing under `root`, stage by stage. Each finished
// stage leaves a DONE marker so an interrupted run resumes at the next stage.
DeskArtifacts ensure_desk_artifacts(const std::filesystem::path& root, const DeskRecipe& recipe,
                                    const LogFn& log = {});

}  // namespace paramstyle

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "paramstyle/guidance.hpp"
#include "paramstyle/image.hpp"
#include "paramstyle/model.hpp"

namespace paramstyle {

// Perceptual-distance proxy: mean over a 3-level Gaussian pyramid of the
// per-level normalized L1, mean|a - b| / (mean|a| + mean|b| + 1e-6).
double perceptual_distance(const ImageBuffer& a, const ImageBuffer& b);

// Pyramid used by perceptual_distance: level 0 is the input, each further
// level is a sigma = 1 blur followed by 2x decimation.
std::vector<ImageBuffer> gaussian_pyramid(const ImageBuffer& img, int levels = 3);

// Smoothness proxy for a distance curve sampled on a uniform grid: the
// population standard deviation of consecutive increments (lower = smoother).
double smoothness(const std::vector<double>& curve);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct PairedTest {
  double mean_difference = 0.0;  // mean(a - b)
  double t = 0.0;
  int dof = 0;
  double p_one_sided = 1.0;      // H1: mean(a - b) > 0
  double p_two_sided = 1.0;
};

// Paired Student t-test of a against b.
PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Conditioning for one evaluation seed: a toy scene supplies prompt and edges.
struct EvalCase {
  std::uint64_t seed = 0;
  int prompt_id = 0;
  ImageBuffer scene;
  ImageBuffer edges;
};

std::vector<EvalCase> make_eval_cases(const std::vector<std::uint64_t>& seeds, int image_size = 32);

struct EvalSetup {
  std::vector<std::uint64_t> seeds;
  GuidanceConfig guidance;
  int steps = 50;
};

struct SweepResult {
  std::string attribute;  // or "cfg-edit" for the prompt-guidance sweep
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> curves;  // [seed][grid]
  std::vector<double> mean_curve;
  double smoothness = 0.0;                  // mean over seeds of smoothness(curve)
  double runtime_seconds = 0.0;
};

// For each seed, fixes z_T, prompt and edge map and varies only `attribute`
// over `grid` (other attributes 0); distances are taken against the lambda = 0
// output of the same seed.
SweepResult sweep(StyleModel& model, const EvalSetup& setup, const std::string& attribute,
                  const std::vector<double>& grid);

// The same protocol with strength expressed through prompt-edit guidance:
// grid value s scales (eps(edit prompt) - eps(prompt)) by s * max_scale. The
// edit prompt keeps each scene's shape and swaps its palette to "mono".
SweepResult cfg_sweep(StyleModel& model, const EvalSetup& setup, const std::vector<double>& grid,
                      double max_scale = 7.5);

struct Heatmap {
  std::string attribute;
  std::vector<double> act_grid;     // rows
  std::vector<double> lambda_grid;  // columns
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> stddev;
};

// Distance of each (act_t, lambda) output from the w2 = 0 output, averaged
// over seeds.
Heatmap heatmap(StyleModel& model, const EvalSetup& setup, const std::string& attribute,
                const std::vector<double>& act_grid, const std::vector<double>& lambda_grid);

// Outputs of one effect-guided run for every seed (images in seed order).
std::vector<ImageBuffer> render_cases(StyleModel& model, const EvalSetup& setup,
                                      const std::vector<EvalCase>& cases, const StyleParams& lambda,
                                      const GuidanceConfig& guidance);

// Uniform grid lo, lo + step, ..., hi (inclusive, rounded to avoid drift).
std::vector<double> uniform_grid(double lo, double hi, double step);

// Writes sweep CSVs (attribute, seed, lambda, distance), heatmap CSVs
// (act_t, lambda, mean_distance, std), PNG plots and summary.json.
void write_report(const std::filesystem::path& dir, const std::vector<SweepResult>& sweeps,
                  const std::vector<Heatmap>& heatmaps, const nlohmann::json& summary);

std::string sweep_csv(const SweepResult& sweep);
std::string heatmap_csv(const Heatmap& heatmap);
ImageBuffer plot_sweep(const SweepResult& sweep, int width = 320, int height = 240);
ImageBuffer plot_heatmap(const Heatmap& heatmap, int cell = 24);

}  // namespace paramstyle

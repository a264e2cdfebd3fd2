// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest_torch.hpp"
#include "json.hpp"
#include "paramstyle/evaluation.hpp"
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

// rank_i = 1 + #{j : x_j < x_i} + (#{j : x_j == x_i} - 1) / 2
std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Upper tail of Student's t by Simpson integration of the density on [0, t].
double student_upper_tail(double t, int dof) {
  const double nu = dof;
  const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * M_PI);
  const auto pdf = [&](double x) { return c * std::pow(1 + x * x / nu, -(nu + 1) / 2); };
  const int n = 20000;
  const double h = std::fabs(t) / n;
  double s = pdf(0) + pdf(std::fabs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  const double half = s * h / 3;
  return t >= 0 ? 0.5 - half : 0.5 + half;
}

StyleModel micro_model() {
  auto model = make_model(micro_config(8), two_attributes(), 51);
  perturb_zero_init(model, 52, 0.2);
  model->eval();
  return model;
}

EvalSetup micro_setup() {
  EvalSetup setup;
  setup.seeds = {1, 2};
  setup.steps = 6;
  return setup;
}

}  // namespace

TEST_CASE("perceptual distance identities and the black/white case") {
  const auto a = random_image(16, 16, 3, 1);
  const auto b = random_image(16, 16, 3, 2);
  CHECK(perceptual_distance(a, a) == 0.0);
  CHECK(perceptual_distance(a, b) == doctest::Approx(perceptual_distance(b, a)).epsilon(1e-12));
  CHECK(perceptual_distance(a, b) > 0.0);
  // Constant images stay constant down the pyramid: each level gives 1 / (0 + 1 + 1e-6).
  const ImageBuffer black(16, 16, 3, 0.0f), white(16, 16, 3, 1.0f);
  CHECK(perceptual_distance(black, white) == doctest::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-9));
  CHECK(gaussian_pyramid(a).size() == 3);
  CHECK(gaussian_pyramid(a)[2].width == 4);
  CHECK_THROWS_AS(perceptual_distance(a, random_image(8, 8, 3, 1)), std::invalid_argument);
}

TEST_CASE("smoothness: linear curves are perfectly smooth, a jump is not") {
  std::vector<double> line;
  for (int i = 0; i <= 10; ++i) line.push_back(0.3 * i + 1);
  CHECK(smoothness(line) == doctest::Approx(0.0).epsilon(1e-12));
  // One jump of height h among n increments: std = h sqrt(p (1 - p)), p = 1 / n.
  for (int at : {1, 4, 10}) {
    std::vector<double> step(11, 0.0);
    for (int i = at; i <= 10; ++i) step[i] = 0.8;
    const double p = 1.0 / 10;
    CHECK(smoothness(step) == doctest::Approx(0.8 * std::sqrt(p * (1 - p))).epsilon(1e-12));
  }
  CHECK(smoothness({1.0, 2.0}) == 0.0);
}

TEST_CASE("spearman matches the brute-force rank oracle, ties included") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(12), y(12);
    for (auto& v : x) v = coarse(rng);
    for (auto& v : y) v = coarse(rng) * 0.5;
    CHECK(spearman(x, y) == doctest::Approx(pearson(brute_ranks(x), brute_ranks(y))).epsilon(1e-12));
  }
  const std::vector<double> g{0, 0.1, 0.2, 0.3};
  CHECK(spearman(g, {1, 2, 3, 4}) == doctest::Approx(1.0));
  CHECK(spearman(g, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(spearman(g, {1, 2}), std::invalid_argument);
}

TEST_CASE("paired t-test against the hand formula and an integrated density") {
  const std::vector<double> a{0.31, 0.42, 0.28, 0.50, 0.39, 0.45, 0.33, 0.47};
  const std::vector<double> b{0.30, 0.35, 0.29, 0.41, 0.30, 0.41, 0.34, 0.38};
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double t = mean / std::sqrt(ss / (n - 1) / n);

  const auto r = paired_t_test(a, b);
  CHECK(r.dof == 7);
  CHECK(r.mean_difference == doctest::Approx(mean).epsilon(1e-12));
  CHECK(r.t == doctest::Approx(t).epsilon(1e-10));
  CHECK(r.p_one_sided == doctest::Approx(student_upper_tail(t, 7)).epsilon(1e-6));
  CHECK(r.p_two_sided == doctest::Approx(2 * student_upper_tail(t, 7)).epsilon(1e-6));
  const auto flipped = paired_t_test(b, a);
  CHECK(flipped.p_one_sided == doctest::Approx(1 - r.p_one_sided).epsilon(1e-9));
  CHECK_THROWS_AS(paired_t_test({1.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("uniform grid includes both ends") {
  const auto g = uniform_grid(0, 1, 0.1);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(1.0));
  CHECK(g[3] == doctest::Approx(0.3));
  CHECK_THROWS_AS(uniform_grid(0, 1, 0), std::invalid_argument);
}

TEST_CASE("sweeps: lambda = 0 gives zero distance and shared grid points agree") {
  auto model = micro_model();
  const auto setup = micro_setup();
  const auto zero = sweep(model, setup, "blackpoint", {0.0});
  REQUIRE(zero.curves.size() == 2);
  for (const auto& c : zero.curves) CHECK(c == std::vector<double>{0.0});

  const auto s = sweep(model, setup, "contourWidth", {0.0, 0.5, 1.0});
  const auto t = sweep(model, setup, "contourWidth", {0.25, 0.5});
  for (std::size_t i = 0; i < s.curves.size(); ++i) {
    CHECK(s.curves[i][0] == 0.0);
    CHECK(s.curves[i][1] == t.curves[i][1]);
  }
  CHECK(s.mean_curve.size() == 3);
  CHECK(s.mean_curve[2] > 0.0);
  CHECK_THROWS_AS(sweep(model, setup, "contourWidth", {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(model, setup, "sepia", {0.0}), std::invalid_argument);

  const auto cfg = cfg_sweep(model, setup, {0.0, 0.5});
  CHECK(cfg.attribute == "cfg-edit");
  for (const auto& c : cfg.curves) CHECK(c[0] == 0.0);
}

TEST_CASE("heatmap zero column and inactive row; report files are reproducible") {
  auto model = micro_model();
  const auto setup = micro_setup();
  const auto h = heatmap(model, setup, "blackpoint", {0.0, 0.5, 1.0}, {0.0, 1.0});
  REQUIRE(h.mean.size() == 3);
  for (const auto& row : h.mean) CHECK(row[0] == 0.0);
  CHECK(h.mean[2][1] == 0.0);  // act_t = 1 never activates effect guidance
  CHECK(h.mean[0][1] > 0.0);

  const auto s = sweep(model, setup, "blackpoint", {0.0, 0.5, 1.0});
  const auto a = scratch_dir("report_a");
  const auto b = scratch_dir("report_b");
  write_report(a, {s}, {h}, {{"fingerprint", "x"}});
  write_report(b, {s}, {h}, {{"fingerprint", "x"}});
  CHECK(slurp(a / "sweep_blackpoint.csv") == slurp(b / "sweep_blackpoint.csv"));
  CHECK(slurp(a / "heatmap_blackpoint.csv") == slurp(b / "heatmap_blackpoint.csv"));
  CHECK(fs::file_size(a / "sweep_blackpoint.png") > 0);
  CHECK(fs::file_size(a / "heatmap_blackpoint.png") > 0);
  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  CHECK(summary["fingerprint"] == "x");
  CHECK(summary["sweeps"][0]["attribute"] == "blackpoint");

  std::istringstream csv(sweep_csv(s));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 1 + 2 * 3);  // header plus one row per (seed, lambda)
  fs::remove_all(a);
  fs::remove_all(b);
}

// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "paramstyle/checkpoint.hpp"
#include "paramstyle/convert.hpp"
#include "paramstyle/filters.hpp"
#include "paramstyle/pipeline.hpp"
#include "paramstyle/sampler.hpp"
#include "paramstyle/scene.hpp"

namespace paramstyle {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- metrics

std::vector<ImageBuffer> gaussian_pyramid(const ImageBuffer& img, int levels) {
  img.validate();
  if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
  std::vector<ImageBuffer> out{img};
  for (int l = 1; l < levels; ++l) {
    const ImageBuffer blurred = gaussian_blur(out.back(), 1.0f);
    const int w = std::max(1, (blurred.width + 1) / 2);
    const int h = std::max(1, (blurred.height + 1) / 2);
    ImageBuffer down(w, h, blurred.channels);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < blurred.channels; ++c) down.at(x, y, c) = blurred.at(2 * x, 2 * y, c);
      }
    }
    out.push_back(std::move(down));
  }
  return out;
}

double perceptual_distance(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw std::invalid_argument("perceptual_distance: images differ in shape");
  }
  const auto pa = gaussian_pyramid(a);
  const auto pb = gaussian_pyramid(b);
  double total = 0.0;
  for (std::size_t l = 0; l < pa.size(); ++l) {
    double diff = 0.0, ma = 0.0, mb = 0.0;
    const auto n = static_cast<double>(pa[l].data.size());
    for (std::size_t i = 0; i < pa[l].data.size(); ++i) {
      diff += std::abs(static_cast<double>(pa[l].data[i]) - pb[l].data[i]);
      ma += std::abs(static_cast<double>(pa[l].data[i]));
      mb += std::abs(static_cast<double>(pb[l].data[i]));
    }
    total += (diff / n) / (ma / n + mb / n + 1e-6);
  }
  return total / static_cast<double>(pa.size());
}

double smoothness(const std::vector<double>& curve) {
  if (curve.size() < 3) return 0.0;
  std::vector<double> inc(curve.size() - 1);
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) inc[i] = curve[i + 1] - curve[i];
  const double mean = std::accumulate(inc.begin(), inc.end(), 0.0) / static_cast<double>(inc.size());
  double var = 0.0;
  for (double d : inc) var += (d - mean) * (d - mean);
  return std::sqrt(var / static_cast<double>(inc.size()));
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  return pearson(average_ranks(x), average_ranks(y));
}

PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired test: need >= 2 pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  PairedTest r;
  r.mean_difference = mean;
  r.dof = static_cast<int>(a.size()) - 1;
  if (sd == 0.0) {
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p_one_sided = mean > 0.0 ? 0.0 : 1.0;
    r.p_two_sided = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(static_cast<double>(r.dof));
  r.p_one_sided = boost::math::cdf(boost::math::complement(dist, r.t));
  r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

// ---------------------------------------------------------------- runs

std::vector<EvalCase> make_eval_cases(const std::vector<std::uint64_t>& seeds, int image_size) {
  std::vector<EvalCase> cases;
  for (const auto seed : seeds) {
    auto cond = scene_condition(static_cast<int>(seed % kPromptVocabularySize), seed, image_size);
    cases.push_back(EvalCase{seed, cond.prompt_id, std::move(cond.scene), std::move(cond.edges)});
  }
  return cases;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("uniform_grid: need step > 0 and hi >= lo");
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  std::vector<double> g;
  for (int i = 0; i <= n; ++i) g.push_back(std::round((lo + i * step) * 1e9) / 1e9);
  return g;
}

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("grid must be strictly increasing");
  }
}

SampleOptions case_options(const std::vector<EvalCase>& cases, const EvalSetup& setup) {
  SampleOptions opts;
  std::vector<torch::Tensor> hints;
  for (const auto& c : cases) {
    opts.prompt_ids.push_back(c.prompt_id);
    hints.push_back(edge_to_hint(c.edges));
  }
  opts.hint = torch::stack(hints);
  opts.guidance = setup.guidance;
  opts.steps = setup.steps;
  return opts;
}

std::vector<ImageBuffer> to_images(const torch::Tensor& latents) {
  std::vector<ImageBuffer> out;
  for (std::int64_t i = 0; i < latents.size(0); ++i) out.push_back(latent_to_image(latents[i]));
  return out;
}

std::vector<ImageBuffer> run(StyleModel& model, const EvalSetup& setup, const SampleOptions& opts) {
  return to_images(sample(model, setup.seeds, opts).latents);
}

void finish(SweepResult& r) {
  r.mean_curve.assign(r.grid.size(), 0.0);
  double smooth = 0.0;
  for (const auto& c : r.curves) {
    for (std::size_t g = 0; g < c.size(); ++g) r.mean_curve[g] += c[g] / static_cast<double>(r.curves.size());
    smooth += smoothness(c);
  }
  r.smoothness = r.curves.empty() ? 0.0 : smooth / static_cast<double>(r.curves.size());
}

}  // namespace

std::vector<ImageBuffer> render_cases(StyleModel& model, const EvalSetup& setup,
                                      const std::vector<EvalCase>& cases, const StyleParams& lambda,
                                      const GuidanceConfig& guidance) {
  auto opts = case_options(cases, setup);
  opts.lambda = lambda;
  opts.guidance = guidance;
  return run(model, setup, opts);
}

SweepResult sweep(StyleModel& model, const EvalSetup& setup, const std::string& attribute,
                  const std::vector<double>& grid) {
  check_grid(grid);
  const auto start = std::chrono::steady_clock::now();
  const auto cases = make_eval_cases(setup.seeds, model->config().image_size);
  SweepResult r;
  r.attribute = attribute;
  r.grid = grid;
  r.seeds = setup.seeds;
  r.curves.assign(cases.size(), std::vector<double>(grid.size(), 0.0));
  const auto zero = StyleParams::zeros(model->attributes());
  // Validates the attribute name up front.
  StyleParams::from_map({{attribute, 0.0f}}, model->attributes());
  const auto reference = render_cases(model, setup, cases, zero, setup.guidance);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto lambda = StyleParams::from_map({{attribute, static_cast<float>(grid[g])}}, model->attributes());
    const auto images = grid[g] == 0.0 ? reference : render_cases(model, setup, cases, lambda, setup.guidance);
    for (std::size_t s = 0; s < cases.size(); ++s) r.curves[s][g] = perceptual_distance(images[s], reference[s]);
  }
  finish(r);
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

SweepResult cfg_sweep(StyleModel& model, const EvalSetup& setup, const std::vector<double>& grid,
                      double max_scale) {
  check_grid(grid);
  const auto start = std::chrono::steady_clock::now();
  const auto cases = make_eval_cases(setup.seeds, model->config().image_size);
  SweepResult r;
  r.attribute = "cfg-edit";
  r.grid = grid;
  r.seeds = setup.seeds;
  r.curves.assign(cases.size(), std::vector<double>(grid.size(), 0.0));
  auto opts = case_options(cases, setup);
  for (const auto& c : cases) {
    const int palette = c.prompt_id / kShapeCount;
    const int shape = c.prompt_id % kShapeCount;
    opts.edit_prompt_ids.push_back(((palette + 2) % kPaletteCount) * kShapeCount + shape);
  }
  // Unedited output: plain classifier-free guidance at w.
  opts.edit_scale = 0.0;
  const auto reference = run(model, setup, opts);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    opts.edit_scale = grid[g] * max_scale;
    const auto images = grid[g] == 0.0 ? reference : run(model, setup, opts);
    for (std::size_t s = 0; s < cases.size(); ++s) r.curves[s][g] = perceptual_distance(images[s], reference[s]);
  }
  finish(r);
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Heatmap heatmap(StyleModel& model, const EvalSetup& setup, const std::string& attribute,
                const std::vector<double>& act_grid, const std::vector<double>& lambda_grid) {
  check_grid(lambda_grid);
  for (double a : act_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("heatmap: act_t values must lie in [0, 1]");
  }
  const auto cases = make_eval_cases(setup.seeds, model->config().image_size);
  Heatmap h;
  h.attribute = attribute;
  h.act_grid = act_grid;
  h.lambda_grid = lambda_grid;
  auto off = setup.guidance;
  off.w2 = 0.0;
  const auto reference = render_cases(model, setup, cases, StyleParams::zeros(model->attributes()), off);
  for (double act : act_grid) {
    std::vector<double> means, stds;
    for (double lam : lambda_grid) {
      auto g = setup.guidance;
      g.act_t = act;
      const auto lambda = StyleParams::from_map({{attribute, static_cast<float>(lam)}}, model->attributes());
      const auto images = render_cases(model, setup, cases, lambda, g);
      std::vector<double> d;
      for (std::size_t s = 0; s < cases.size(); ++s) d.push_back(perceptual_distance(images[s], reference[s]));
      const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
      double var = 0.0;
      for (double v : d) var += (v - mean) * (v - mean);
      means.push_back(mean);
      stds.push_back(std::sqrt(var / static_cast<double>(d.size())));
    }
    h.mean.push_back(means);
    h.stddev.push_back(stds);
  }
  return h;
}

// ---------------------------------------------------------------- report

std::string sweep_csv(const SweepResult& s) {
  std::ostringstream out;
  out.precision(9);
  out << "attribute,seed,lambda,distance\n";
  for (std::size_t i = 0; i < s.curves.size(); ++i) {
    for (std::size_t g = 0; g < s.grid.size(); ++g) {
      out << s.attribute << ',' << s.seeds[i] << ',' << s.grid[g] << ',' << s.curves[i][g] << '\n';
    }
  }
  return out.str();
}

std::string heatmap_csv(const Heatmap& h) {
  std::ostringstream out;
  out.precision(9);
  out << "act_t,lambda,mean_distance,std\n";
  for (std::size_t r = 0; r < h.act_grid.size(); ++r) {
    for (std::size_t c = 0; c < h.lambda_grid.size(); ++c) {
      out << h.act_grid[r] << ',' << h.lambda_grid[c] << ',' << h.mean[r][c] << ',' << h.stddev[r][c] << '\n';
    }
  }
  return out.str();
}

namespace {

struct Rgb {
  float r, g, b;
};

void put(ImageBuffer& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(x, y, 0) = c.r;
  img.at(x, y, 1) = c.g;
  img.at(x, y, 2) = c.b;
}

// Bresenham line.
void line(ImageBuffer& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

Rgb ramp(double v) {
  // Dark blue -> teal -> yellow.
  v = std::clamp(v, 0.0, 1.0);
  const Rgb a{0.15f, 0.1f, 0.4f}, b{0.1f, 0.6f, 0.55f}, c{0.98f, 0.9f, 0.15f};
  const auto mix = [](Rgb p, Rgb q, double t) {
    return Rgb{static_cast<float>(p.r + (q.r - p.r) * t), static_cast<float>(p.g + (q.g - p.g) * t),
               static_cast<float>(p.b + (q.b - p.b) * t)};
  };
  return v < 0.5 ? mix(a, b, v * 2.0) : mix(b, c, (v - 0.5) * 2.0);
}

}  // namespace

ImageBuffer plot_sweep(const SweepResult& s, int width, int height) {
  ImageBuffer img(width, height, 3, 1.0f);
  const int left = 24, right = width - 8, top = 8, bottom = height - 20;
  double ymax = 1e-9;
  for (const auto& c : s.curves) for (double v : c) ymax = std::max(ymax, v);
  const double x0 = s.grid.front(), x1 = s.grid.size() > 1 ? s.grid.back() : s.grid.front() + 1.0;
  const auto px = [&](double x) { return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (right - left))); };
  const auto py = [&](double y) { return bottom - static_cast<int>(std::lround(y / ymax * (bottom - top))); };
  line(img, left, bottom, right, bottom, {0, 0, 0});
  line(img, left, bottom, left, top, {0, 0, 0});
  const auto draw = [&](const std::vector<double>& c, Rgb color) {
    for (std::size_t g = 1; g < c.size(); ++g) line(img, px(s.grid[g - 1]), py(c[g - 1]), px(s.grid[g]), py(c[g]), color);
  };
  for (const auto& c : s.curves) draw(c, {0.75f, 0.75f, 0.75f});
  draw(s.mean_curve, {0.1f, 0.3f, 0.85f});
  return img;
}

ImageBuffer plot_heatmap(const Heatmap& h, int cell) {
  const int rows = static_cast<int>(h.act_grid.size());
  const int cols = static_cast<int>(h.lambda_grid.size());
  ImageBuffer img(std::max(1, cols * cell), std::max(1, rows * cell), 3, 1.0f);
  double vmax = 1e-9;
  for (const auto& r : h.mean) for (double v : r) vmax = std::max(vmax, v);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Rgb color = ramp(h.mean[r][c] / vmax);
      for (int y = r * cell; y < (r + 1) * cell; ++y) {
        for (int x = c * cell; x < (c + 1) * cell; ++x) put(img, x, y, color);
      }
    }
  }
  return img;
}

void write_report(const fs::path& dir, const std::vector<SweepResult>& sweeps,
                  const std::vector<Heatmap>& heatmaps, const json& summary) {
  fs::create_directories(dir);
  json out = summary;
  out["sweeps"] = json::array();
  for (const auto& s : sweeps) {
    const std::string stem = "sweep_" + s.attribute;
    write_file_atomic(dir / (stem + ".csv"), sweep_csv(s));
    write_png(plot_sweep(s), dir / (stem + ".png"));
    std::vector<double> curve = s.mean_curve;
    out["sweeps"].push_back({{"attribute", s.attribute},
                             {"grid", s.grid},
                             {"mean_curve", curve},
                             {"spearman", s.grid.size() > 1 ? spearman(s.grid, curve) : 0.0},
                             {"smoothness_istd_proxy", s.smoothness},
                             {"seeds", s.seeds.size()},
                             {"runtime_seconds", s.runtime_seconds}});
  }
  out["heatmaps"] = json::array();
  for (const auto& h : heatmaps) {
    const std::string stem = "heatmap_" + h.attribute;
    write_file_atomic(dir / (stem + ".csv"), heatmap_csv(h));
    write_png(plot_heatmap(h), dir / (stem + ".png"));
    out["heatmaps"].push_back({{"attribute", h.attribute},
                               {"act_grid", h.act_grid},
                               {"lambda_grid", h.lambda_grid},
                               {"mean", h.mean}});
  }
  write_file_atomic(dir / "summary.json", out.dump(2));
}

}  // namespace paramstyle

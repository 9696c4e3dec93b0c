#include "agbseq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace agbseq {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Spectral-synthesis Gaussian random field: sum of Fourier modes with
// amplitude |k|^(exponent/2) and seeded random phases, standardised to zero
// mean and unit variance over the grid.
std::vector<double> random_field(int width, int height, double exponent, std::mt19937_64& rng) {
  const int kmax = 16;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  struct Mode {
    double fx, fy, amp, ph;
  };
  std::vector<Mode> modes;
  for (int ky = 0; ky <= kmax; ++ky)
    for (int kx = -kmax; kx <= kmax; ++kx) {
      if (ky == 0 && kx <= 0) continue;  // one mode per +/- pair, skip DC
      const double f = std::sqrt(double(kx) * kx + double(ky) * ky);
      Mode m;
      m.fx = 2.0 * kPi * kx / width;
      m.fy = 2.0 * kPi * ky / height;
      m.amp = std::pow(f, exponent / 2.0) * normal(rng);
      m.ph = phase(rng);
      modes.push_back(m);
    }

  std::vector<double> field(static_cast<size_t>(width) * height, 0.0);
  for (const auto& m : modes) {
    for (int r = 0; r < height; ++r) {
      const double ry = m.fy * r + m.ph;
      for (int c = 0; c < width; ++c)
        field[static_cast<size_t>(r) * width + c] += m.amp * std::cos(m.fx * c + ry);
    }
  }

  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= field.size();
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  var /= field.size();
  const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (double& v : field) v = (v - mean) * inv_sd;
  return field;
}

double forward_model(double agb, double v0, double vinf, double k) {
  return vinf - (vinf - v0) * std::exp(-k * agb);
}

}  // namespace

SceneBundle gen_scene(unsigned long long seed, const SceneConfig& cfg) {
  if (cfg.width < 8 || cfg.height < 8)
    throw std::invalid_argument("gen_scene: extent must be at least 8x8 pixels");

  SceneBundle scene;
  scene.seed = seed;
  scene.config = cfg;
  std::mt19937_64 rng(seed);

  // (1) AGB truth: affine map of a unit-variance field onto the AGB range,
  // clamped.
  auto field = random_field(cfg.width, cfg.height, cfg.spectrum_exponent, rng);
  scene.agb_truth = Raster(cfg.width, cfg.height, 1, cfg.pixel_size_m);
  for (size_t i = 0; i < field.size(); ++i) {
    const double v = cfg.agb_max * (0.5 + 0.3 * field[i]);
    scene.agb_truth.data[i] = std::clamp(v, 0.0, cfg.agb_max);
  }

  // (2) backscatter: saturating curve times gamma speckle with mean 1.
  scene.vv = Raster(cfg.width, cfg.height, 1, cfg.pixel_size_m);
  scene.vh = Raster(cfg.width, cfg.height, 1, cfg.pixel_size_m);
  std::gamma_distribution<double> speckle(cfg.speckle_looks, 1.0 / cfg.speckle_looks);
  for (size_t i = 0; i < field.size(); ++i) {
    const double agb = scene.agb_truth.data[i];
    scene.vv.data[i] = forward_model(agb, cfg.vv_v0, cfg.vv_vinf, cfg.vv_k) * speckle(rng);
    scene.vh.data[i] = forward_model(agb, cfg.vh_v0, cfg.vh_vinf, cfg.vh_k) * speckle(rng);
  }

  // (3) surrogate reference map: truth plus Gaussian noise, clamped at 0.
  scene.als_surrogate = Raster(cfg.width, cfg.height, 1, cfg.pixel_size_m);
  std::normal_distribution<double> noise(0.0, cfg.surrogate_sigma);
  for (size_t i = 0; i < field.size(); ++i)
    scene.als_surrogate.data[i] = std::max(0.0, scene.agb_truth.data[i] + noise(rng));

  // (4) non-overlapping circular plots by rejection sampling; reduce the
  // count with a warning if the extent cannot hold them all.
  const double r = cfg.plot_radius_m;
  const double ext_x = cfg.width * cfg.pixel_size_m;
  const double ext_y = cfg.height * cfg.pixel_size_m;
  if (ext_x <= 2 * r || ext_y <= 2 * r)
    throw std::invalid_argument("gen_scene: extent too small for a single plot");
  std::uniform_real_distribution<double> ux(r, ext_x - r);
  std::uniform_real_distribution<double> uy(r, ext_y - r);
  const int max_attempts = cfg.n_plots * 2000;
  int attempts = 0;
  while (static_cast<int>(scene.plots.size()) < cfg.n_plots && attempts < max_attempts) {
    ++attempts;
    const double cx = ux(rng);
    const double ny = uy(rng);  // distance below the top edge
    bool clear = true;
    for (const auto& p : scene.plots) {
      const double dx = p.centre_x - cx;
      const double dy = p.centre_y - (scene.agb_truth.origin_y - ny);
      if (dx * dx + dy * dy < 4 * r * r) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    PlotRecord p;
    p.id = "P" + std::to_string(scene.plots.size() + 1);
    p.centre_x = cx;
    p.centre_y = scene.agb_truth.origin_y - ny;  // northing decreases with row
    p.radius = r;
    scene.plots.push_back(p);
  }
  if (static_cast<int>(scene.plots.size()) < cfg.n_plots)
    scene.warnings.push_back("extent holds only " + std::to_string(scene.plots.size()) + " of " +
                             std::to_string(cfg.n_plots) + " requested plots");

  for (auto& p : scene.plots) p.agb = area_weighted_mean(scene.agb_truth, p);
  return scene;
}

}  // namespace agbseq

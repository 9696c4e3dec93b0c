#pragma once

#include <string>
#include <vector>

#include "agbseq/plots.hpp"
#include "agbseq/raster.hpp"

namespace agbseq {

struct SceneConfig {
  int width = 256;
  int height = 256;
  double pixel_size_m = 26.6;
  double agb_max = 213.4;
  double surrogate_sigma = 15.0;
  double speckle_looks = 4.0;   // gamma shape, mean 1
  int n_plots = 88;
  double plot_radius_m = 15.0;
  double spectrum_exponent = -3.0;
  // saturating forward model sigma0 = v_inf - (v_inf - v0) * exp(-k * AGB)
  double vv_v0 = 0.02, vv_vinf = 0.30, vv_k = 0.015;
  double vh_v0 = 0.005, vh_vinf = 0.10, vh_k = 0.012;
};

// One synthetic scene: smooth AGB truth, speckled linear-power VV/VH
// backscatter from a saturating forward model, a noisy surrogate AGB map,
// and circular field plots sampled from the truth.
struct SceneBundle {
  Raster agb_truth;      // Mg/ha, clamped to [0, agb_max]
  Raster vv, vh;         // linear backscatter, speckled
  Raster als_surrogate;  // truth + N(0, sigma^2), clamped at 0
  std::vector<PlotRecord> plots;
  unsigned long long seed = 0;
  SceneConfig config;
  std::vector<std::string> warnings;
};

SceneBundle gen_scene(unsigned long long seed, const SceneConfig& cfg = {});

}  // namespace agbseq

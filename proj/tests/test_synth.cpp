#include <doctest.h>

#include <cmath>
#include <set>

#include "agbseq/synth.hpp"

using namespace agbseq;

TEST_CASE("scene generation is deterministic under the seed") {
  SceneConfig cfg;
  cfg.width = cfg.height = 96;
  cfg.n_plots = 12;
  auto a = gen_scene(7, cfg);
  auto b = gen_scene(7, cfg);
  CHECK(a.agb_truth.data == b.agb_truth.data);
  CHECK(a.vv.data == b.vv.data);
  CHECK(a.vh.data == b.vh.data);
  CHECK(a.als_surrogate.data == b.als_surrogate.data);
  REQUIRE(a.plots.size() == b.plots.size());
  for (size_t i = 0; i < a.plots.size(); ++i) {
    CHECK(a.plots[i].centre_x == b.plots[i].centre_x);
    CHECK(a.plots[i].agb == b.plots[i].agb);
  }
  auto c = gen_scene(8, cfg);
  CHECK(a.agb_truth.data != c.agb_truth.data);
}

TEST_CASE("truth and surrogate respect their physical ranges") {
  auto s = gen_scene(1);
  CHECK(s.agb_truth.width == 256);
  CHECK(s.agb_truth.pixel_size == 26.6);
  double lo = 1e9, hi = -1e9;
  for (double v : s.agb_truth.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 213.4);
  CHECK(hi > 100.0);  // the field actually exercises the range
  for (double v : s.als_surrogate.data) CHECK(v >= 0.0);
  for (double v : s.vv.data) CHECK(v > 0.0);
  for (double v : s.vh.data) CHECK(v > 0.0);
}

TEST_CASE("default scene yields 88 non-overlapping plots inside the extent") {
  auto s = gen_scene(1);
  REQUIRE(s.plots.size() == 88);
  CHECK(s.warnings.empty());
  const double w_m = 256 * 26.6;
  for (const auto& p : s.plots) {
    CHECK(p.radius == 15.0);
    CHECK(p.centre_x >= 15.0);
    CHECK(p.centre_x <= w_m - 15.0);
    CHECK(p.centre_y <= -15.0);
    CHECK(p.centre_y >= -(w_m - 15.0));
    CHECK(p.agb >= 0.0);
    CHECK(p.agb <= 213.4);
  }
  for (size_t i = 0; i < s.plots.size(); ++i)
    for (size_t j = i + 1; j < s.plots.size(); ++j) {
      const double dx = s.plots[i].centre_x - s.plots[j].centre_x;
      const double dy = s.plots[i].centre_y - s.plots[j].centre_y;
      CHECK(std::sqrt(dx * dx + dy * dy) >= 2.0 * 15.0);
    }
  // Plot identifiers are unique.
  std::set<std::string> ids;
  for (const auto& p : s.plots) ids.insert(p.id);
  CHECK(ids.size() == s.plots.size());
}

TEST_CASE("plot AGB equals the area-weighted mean of the truth raster") {
  auto s = gen_scene(3);
  for (size_t i = 0; i < 10; ++i)
    CHECK(s.plots[i].agb == doctest::Approx(area_weighted_mean(s.agb_truth, s.plots[i])));
}

TEST_CASE("zero saturation rate gives backscatter at the floor") {
  SceneConfig cfg;
  cfg.width = cfg.height = 64;
  cfg.n_plots = 4;
  cfg.vv_k = 0.0;
  cfg.speckle_looks = 1e9;  // effectively no speckle
  auto s = gen_scene(5, cfg);
  for (double v : s.vv.data) CHECK(v == doctest::Approx(cfg.vv_v0).epsilon(1e-3));
}

TEST_CASE("speckle preserves the mean backscatter") {
  SceneConfig cfg;
  cfg.width = cfg.height = 256;
  cfg.n_plots = 4;
  cfg.vv_k = 0.0;  // flat truth-independent field at v0, isolating the speckle
  auto s = gen_scene(9, cfg);
  double mean = 0.0;
  for (double v : s.vv.data) mean += v;
  mean /= s.vv.data.size();
  CHECK(mean == doctest::Approx(cfg.vv_v0).epsilon(0.01));
  // Multiplicative gamma speckle with L looks has CV = 1/sqrt(L).
  double var = 0.0;
  for (double v : s.vv.data) var += (v - mean) * (v - mean);
  var /= s.vv.data.size();
  CHECK(std::sqrt(var) / mean == doctest::Approx(1.0 / std::sqrt(cfg.speckle_looks)).epsilon(0.05));
}

TEST_CASE("backscatter increases with biomass on average") {
  auto s = gen_scene(11);
  // Bin pixels by truth above/below the median and compare mean VV.
  std::vector<double> t = s.agb_truth.data;
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  const double med = t[t.size() / 2];
  double lo_sum = 0.0, hi_sum = 0.0;
  size_t lo_n = 0, hi_n = 0;
  for (size_t i = 0; i < s.agb_truth.data.size(); ++i) {
    if (s.agb_truth.data[i] <= med) {
      lo_sum += s.vv.data[i];
      ++lo_n;
    } else {
      hi_sum += s.vv.data[i];
      ++hi_n;
    }
  }
  CHECK(hi_sum / hi_n > lo_sum / lo_n);
}

TEST_CASE("an extent too small for the requested plots produces a warning") {
  SceneConfig cfg;
  cfg.width = cfg.height = 8;
  cfg.pixel_size_m = 10.0;  // 80 m x 80 m: room for very few 15 m plots
  cfg.n_plots = 88;
  auto s = gen_scene(2, cfg);
  CHECK(s.plots.size() < 88);
  CHECK_FALSE(s.warnings.empty());
}

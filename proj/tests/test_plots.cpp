#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "agbseq/plots.hpp"

using namespace agbseq;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("plots CSV round-trip") {
  std::vector<PlotRecord> plots{{"P1", 100.0, -50.0, 15.0, 123.4}, {"P2", 30.5, -72.25, 15.0, 0.0}};
  save_plots(plots, "plots_rt.csv");
  auto back = load_plots("plots_rt.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "P1");
  CHECK(back[0].centre_x == 100.0);
  CHECK(back[0].centre_y == -50.0);
  CHECK(back[0].agb == 123.4);
  CHECK(back[1].agb == 0.0);
  std::remove("plots_rt.csv");
}

TEST_CASE("plots CSV validation errors name the offending line") {
  write_file("plots_bad1.csv", "plot_id,center_x_m,center_y_m,radius_m,agb_mg_ha\nP1,1,2,15\n");
  CHECK_THROWS_WITH_AS(load_plots("plots_bad1.csv"), doctest::Contains("line 2"),
                       std::runtime_error);
  write_file("plots_bad2.csv", "plot_id,center_x_m,center_y_m,radius_m,agb_mg_ha\nP1,1,2,15,abc\n");
  CHECK_THROWS_WITH_AS(load_plots("plots_bad2.csv"), doctest::Contains("non-numeric"),
                       std::runtime_error);
  write_file("plots_bad3.csv", "plot_id,center_x_m,center_y_m,radius_m,agb_mg_ha\nP1,1,2,15,900\n");
  CHECK_THROWS_AS(load_plots("plots_bad3.csv"), std::runtime_error);  // AGB over ceiling
  write_file("plots_bad4.csv", "plot_id,center_x_m,center_y_m,radius_m,agb_mg_ha\nP1,1,2,-3,50\n");
  CHECK_THROWS_AS(load_plots("plots_bad4.csv"), std::runtime_error);  // non-positive radius
  CHECK_THROWS_AS(load_plots("plots_no_such_file.csv"), std::runtime_error);
  for (const char* f : {"plots_bad1.csv", "plots_bad2.csv", "plots_bad3.csv", "plots_bad4.csv"})
    std::remove(f);
}

TEST_CASE("single-pixel containment returns the pixel value exactly") {
  // 10 m pixels; a 3 m circle centred inside pixel (3, 2)
  Raster r(8, 8, 1, 10.0);
  for (int row = 0; row < 8; ++row)
    for (int col = 0; col < 8; ++col) r.at(col, row) = 10.0 * row + col;
  PlotRecord p{"P", 35.0, -25.0, 3.0, 0.0};
  CHECK(area_weighted_mean(r, p) == 23.0);
}

TEST_CASE("symmetric two-pixel straddle blends 0 and 100 to 50 +- 2") {
  Raster r(2, 1, 1, 10.0);
  r.at(0, 0) = 0.0;
  r.at(1, 0) = 100.0;
  PlotRecord p{"P", 10.0, -5.0, 4.0, 0.0};  // centred on the shared edge
  CHECK(area_weighted_mean(r, p) == doctest::Approx(50.0).epsilon(0.04));
}

TEST_CASE("doubling sub-sampling changes the result by well under 0.5") {
  Raster r(12, 12, 1, 10.0);
  for (int row = 0; row < 12; ++row)
    for (int col = 0; col < 12; ++col) r.at(col, row) = 5.0 * col + 2.0 * row;
  PlotRecord p{"P", 57.0, -61.0, 15.0, 0.0};
  const double a = area_weighted_mean(r, p, 32);
  const double b = area_weighted_mean(r, p, 64);
  CHECK(std::fabs(a - b) < 0.5);
}

TEST_CASE("plots outside the extent or over nodata are errors") {
  Raster r(4, 4, 1, 10.0);
  r.nodata = -1.0;
  std::fill(r.data.begin(), r.data.end(), -1.0);
  PlotRecord outside{"P", 500.0, -500.0, 15.0, 0.0};
  CHECK_THROWS_AS(area_weighted_mean(r, outside), std::invalid_argument);
  PlotRecord inside{"P", 20.0, -20.0, 15.0, 0.0};
  CHECK_THROWS_AS(area_weighted_mean(r, inside), std::invalid_argument);  // all nodata
}

TEST_CASE("nodata pixels are excluded from the weighted mean") {
  Raster r(3, 3, 1, 10.0);
  r.nodata = -1.0;
  std::fill(r.data.begin(), r.data.end(), 80.0);
  r.at(1, 1) = -1.0;
  PlotRecord p{"P", 15.0, -15.0, 12.0, 0.0};
  CHECK(area_weighted_mean(r, p) == doctest::Approx(80.0));
}

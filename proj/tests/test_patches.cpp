#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "agbseq/patches.hpp"

using namespace agbseq;

namespace {

Raster random_raster(int w, int h, int c, unsigned seed) {
  Raster r(w, h, c, 26.6);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 200.0);
  for (auto& v : r.data) v = unif(rng);
  return r;
}

}  // namespace

TEST_CASE("grid extraction covers full windows and drops partial ones") {
  auto r = random_raster(150, 100, 2, 1);
  auto patches = extract_grid(r, 64, 64);
  REQUIRE(patches.size() == 2);  // 2 across, 1 down
  CHECK(patches[0].origin_col == 0);
  CHECK(patches[1].origin_col == 64);
  CHECK(patches[0].channels == 2);
  CHECK(patches[1].at(3, 5, 1) == r.at(64 + 3, 5, 1));
  auto strided = extract_grid(r, 64, 32);
  CHECK(strided.size() == 3 * 2);  // cols 0,32,64; rows 0,32
  CHECK_THROWS_AS(extract_grid(r, 0, 32), std::invalid_argument);
  CHECK_THROWS_AS(extract_grid(r, 64, 0), std::invalid_argument);
  Raster tiny(32, 32, 1);
  CHECK(extract_grid(tiny, 64, 64).empty());
}

TEST_CASE("single patch extraction copies the window exactly") {
  auto r = random_raster(100, 100, 1, 2);
  auto p = extract_patch(r, 20, 30, 16);
  CHECK(p.origin_col == 20);
  CHECK(p.origin_row == 30);
  for (int row = 0; row < 16; ++row)
    for (int col = 0; col < 16; ++col) CHECK(p.at(col, row) == r.at(20 + col, 30 + row));
  CHECK_THROWS_AS(extract_patch(r, 90, 0, 16), std::invalid_argument);  // runs past the edge
  CHECK_THROWS_AS(extract_patch(r, -1, 0, 16), std::invalid_argument);
}

TEST_CASE("dihedral transforms behave as a group") {
  auto r = random_raster(10, 10, 2, 3);
  auto p = extract_patch(r, 0, 0, 8);

  // rot90 moves (col, row) -> (size-1-row, col)
  auto q = transform_patch(p, 1);
  CHECK(q.at(8 - 1 - 2, 5, 1) == p.at(5, 2, 1));
  // rot180 is rot90 twice
  auto q2 = transform_patch(transform_patch(p, 1), 1);
  auto r180 = transform_patch(p, 2);
  CHECK(q2.data == r180.data);
  // flip is an involution
  auto f = transform_patch(transform_patch(p, 4), 4);
  CHECK(f.data == p.data);
  // rot270 then rot90 is the identity
  auto id = transform_patch(transform_patch(p, 3), 1);
  CHECK(id.data == p.data);
  CHECK_THROWS_AS(transform_patch(p, 8), std::invalid_argument);
  CHECK_THROWS_AS(transform_patch(p, -1), std::invalid_argument);
}

TEST_CASE("augment yields 8 distinct variants with identity first") {
  auto r = random_raster(10, 10, 1, 4);
  auto p = extract_patch(r, 1, 1, 8);
  auto all = augment(p);
  REQUIRE(all.size() == 8);
  CHECK(all[0].data == p.data);
  std::set<std::vector<double>> unique;
  for (const auto& v : all) unique.insert(v.data);
  CHECK(unique.size() == 8);  // random data has no symmetries
  for (int v = 0; v < 8; ++v) CHECK(all[v].data == transform_patch(p, v).data);
}

TEST_CASE("fold plan partitions the grid and keeps training clear of test footprints") {
  auto r = random_raster(256, 256, 1, 5);
  auto plan = make_folds(r, 4, 11, 64);
  REQUIRE(plan.k == 4);
  REQUIRE(plan.test_grid_indices.size() == 4);
  REQUIRE(plan.train_origins.size() == 4);

  // Every grid cell appears in exactly one fold.
  std::vector<int> seen;
  for (const auto& fold : plan.test_grid_indices)
    seen.insert(seen.end(), fold.begin(), fold.end());
  std::sort(seen.begin(), seen.end());
  std::vector<int> expect(16);
  for (int i = 0; i < 16; ++i) expect[i] = i;
  CHECK(seen == expect);

  // Training windows never overlap a test footprint of their fold.
  const int cells_across = 256 / 64;
  for (int f = 0; f < 4; ++f) {
    for (auto [oc, orow] : plan.train_origins[f]) {
      for (int idx : plan.test_grid_indices[f]) {
        const int tc = (idx % cells_across) * 64;
        const int tr = (idx / cells_across) * 64;
        const bool overlap = oc < tc + 64 && oc + 64 > tc && orow < tr + 64 && orow + 64 > tr;
        CHECK_FALSE(overlap);
      }
    }
    CHECK_FALSE(plan.train_origins[f].empty());
  }

  // Deterministic under the seed, different under another.
  auto again = make_folds(r, 4, 11, 64);
  CHECK(again.test_grid_indices == plan.test_grid_indices);
  auto other = make_folds(r, 4, 12, 64);
  CHECK(other.test_grid_indices != plan.test_grid_indices);
  CHECK_THROWS_AS(make_folds(r, 17, 0, 64), std::invalid_argument);  // more folds than cells
}

TEST_CASE("mosaicking stride-32 patches reproduces the raster to 1e-6") {
  auto r = random_raster(256, 256, 1, 6);
  auto patches = extract_grid(r, 64, 32);
  size_t uncovered = 123;
  auto back = mosaic_pnorm(patches, r, 5.0, &uncovered);
  CHECK(uncovered == 0);
  double max_abs = 0.0;
  for (size_t i = 0; i < r.data.size(); ++i)
    max_abs = std::max(max_abs, std::fabs(back.data[i] - r.data[i]));
  CHECK(max_abs < 1e-6);
  CHECK(back.pixel_size == r.pixel_size);
  CHECK(back.origin_x == r.origin_x);
}

TEST_CASE("symmetric two-patch blend of 0 and 100 gives 50") {
  Raster like(96, 64, 1);
  Patch a, b;
  a.size = b.size = 64;
  a.channels = b.channels = 1;
  a.data.assign(64 * 64, 0.0);
  b.data.assign(64 * 64, 100.0);
  a.origin_col = 0;
  b.origin_col = 32;
  // In the overlap column range [32, 64), the pair of border distances is
  // symmetric around the overlap centre; probe the exact middle.
  auto m = mosaic_pnorm({a, b}, like, 5.0);
  for (int row = 0; row < 64; ++row) {
    CHECK(m.at(47, row) + m.at(48, row) == doctest::Approx(100.0));
    CHECK(m.at(10, row) == 0.0);
    CHECK(m.at(80, row) == 100.0);
  }
}

TEST_CASE("uncovered pixels become nodata and are counted") {
  Raster like(100, 64, 1);
  like.nodata = -9999.0;
  auto p = extract_patch(random_raster(100, 64, 1, 7), 0, 0, 64);
  size_t uncovered = 0;
  auto m = mosaic_pnorm({p}, like, 5.0, &uncovered);
  CHECK(uncovered == static_cast<size_t>(36 * 64));
  CHECK(m.at(70, 10) == -9999.0);
  CHECK(m.at(10, 10) == p.at(10, 10));  // single-source pixels copied exactly
  CHECK_THROWS_AS(mosaic_pnorm({}, like, 5.0), std::invalid_argument);
}

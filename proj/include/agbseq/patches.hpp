#pragma once

#include <vector>

#include "agbseq/raster.hpp"

namespace agbseq {

// A size x size window copied out of a parent raster.
struct Patch {
  int origin_col = 0;
  int origin_row = 0;
  int size = 64;
  int channels = 1;
  std::vector<double> data;  // row-major, channel-interleaved

  double& at(int col, int row, int ch = 0) {
    return data[(static_cast<size_t>(row) * size + col) * channels + ch];
  }
  double at(int col, int row, int ch = 0) const {
    return data[(static_cast<size_t>(row) * size + col) * channels + ch];
  }
};

struct FoldPlan {
  int k = 5;
  // Per fold: indices into the non-overlapping grid (test) and the list of
  // training patch origins (stride-32 grid, footprints disjoint from the
  // fold's test patches).
  std::vector<std::vector<int>> test_grid_indices;
  std::vector<std::vector<std::pair<int, int>>> train_origins;
};

// Row-major full windows; trailing partial windows are dropped.
std::vector<Patch> extract_grid(const Raster& r, int size = 64, int stride = 64);
Patch extract_patch(const Raster& r, int col, int row, int size = 64);

// The 8 dihedral-group variants: 4 rotations x {identity, horizontal flip}.
// Index order: rot0, rot90, rot180, rot270, then the same four flipped.
std::vector<Patch> augment(const Patch& p);
Patch transform_patch(const Patch& p, int variant);

// Seeded assignment of the non-overlapping grid to k folds; training origins
// per fold are the stride-(size/2) windows avoiding every test footprint.
FoldPlan make_folds(const Raster& r, int k = 5, unsigned long long seed = 0, int size = 64);

// Weighted-average blend of overlapping patches. Weight of patch i at a pixel
// is (1 + distance to the patch's nearest border, in pixels)^p.
// Geo metadata is taken from `like`; uncovered pixels become nodata and their
// count is returned via uncovered (when non-null).
Raster mosaic_pnorm(const std::vector<Patch>& patches, const Raster& like, double p = 5.0,
                    size_t* uncovered = nullptr);

}  // namespace agbseq

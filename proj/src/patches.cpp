#include "agbseq/patches.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace agbseq {

Patch extract_patch(const Raster& r, int col, int row, int size) {
  if (col < 0 || row < 0 || col + size > r.width || row + size > r.height)
    throw std::invalid_argument("extract_patch: window outside raster");
  Patch p;
  p.origin_col = col;
  p.origin_row = row;
  p.size = size;
  p.channels = r.channels;
  p.data.resize(static_cast<size_t>(size) * size * r.channels);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      for (int ch = 0; ch < r.channels; ++ch)
        p.at(j, i, ch) = r.at(col + j, row + i, ch);
  return p;
}

std::vector<Patch> extract_grid(const Raster& r, int size, int stride) {
  if (size < 1 || stride < 1) throw std::invalid_argument("extract_grid: bad size/stride");
  std::vector<Patch> out;
  for (int row = 0; row + size <= r.height; row += stride)
    for (int col = 0; col + size <= r.width; col += stride)
      out.push_back(extract_patch(r, col, row, size));
  return out;
}

Patch transform_patch(const Patch& p, int variant) {
  if (variant < 0 || variant > 7) throw std::invalid_argument("transform_patch: variant in [0,7]");
  const int rot = variant % 4;
  const bool flip = variant >= 4;
  const int s = p.size;
  Patch out = p;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      int sj = flip ? s - 1 - j : j;  // horizontal flip first
      int si = i;
      // then rotate by rot * 90 degrees counter-clockwise
      for (int k = 0; k < rot; ++k) {
        const int ti = si, tj = sj;
        si = s - 1 - tj;
        sj = ti;
      }
      for (int ch = 0; ch < p.channels; ++ch) out.at(j, i, ch) = p.at(sj, si, ch);
    }
  return out;
}

std::vector<Patch> augment(const Patch& p) {
  std::vector<Patch> out;
  out.reserve(8);
  for (int v = 0; v < 8; ++v) out.push_back(transform_patch(p, v));
  return out;
}

FoldPlan make_folds(const Raster& r, int k, unsigned long long seed, int size) {
  const auto grid = extract_grid(r, size, size);
  if (static_cast<int>(grid.size()) < k)
    throw std::invalid_argument("make_folds: fewer grid patches than folds");

  std::vector<int> idx(grid.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  FoldPlan plan;
  plan.k = k;
  plan.test_grid_indices.assign(k, {});
  for (size_t i = 0; i < idx.size(); ++i)
    plan.test_grid_indices[i % k].push_back(idx[i]);
  for (auto& fold : plan.test_grid_indices) std::sort(fold.begin(), fold.end());

  // Training origins: the 50%-overlap grid restricted to windows whose pixel
  // footprint avoids every test patch of the fold.
  const int stride = std::max(1, size / 2);
  plan.train_origins.assign(k, {});
  for (int f = 0; f < k; ++f) {
    for (int row = 0; row + size <= r.height; row += stride) {
      for (int col = 0; col + size <= r.width; col += stride) {
        bool overlaps_test = false;
        for (int t : plan.test_grid_indices[f]) {
          const auto& tp = grid[t];
          if (col < tp.origin_col + size && col + size > tp.origin_col &&
              row < tp.origin_row + size && row + size > tp.origin_row) {
            overlaps_test = true;
            break;
          }
        }
        if (!overlaps_test) plan.train_origins[f].emplace_back(col, row);
      }
    }
  }
  return plan;
}

Raster mosaic_pnorm(const std::vector<Patch>& patches, const Raster& like, double p,
                    size_t* uncovered) {
  if (patches.empty()) throw std::invalid_argument("mosaic: no patches");
  const int ch = patches.front().channels;
  Raster out(like.width, like.height, ch, like.pixel_size, like.origin_x, like.origin_y);
  out.nodata = std::isnan(like.nodata) ? std::numeric_limits<double>::quiet_NaN() : like.nodata;

  std::vector<double> wsum(out.size(), 0.0);
  std::fill(out.data.begin(), out.data.end(), 0.0);

  for (const auto& patch : patches) {
    const int s = patch.size;
    for (int i = 0; i < s; ++i) {
      const int row = patch.origin_row + i;
      if (row < 0 || row >= out.height) continue;
      for (int j = 0; j < s; ++j) {
        const int col = patch.origin_col + j;
        if (col < 0 || col >= out.width) continue;
        const int border = std::min(std::min(i, s - 1 - i), std::min(j, s - 1 - j));
        const double w = std::pow(1.0 + border, p);
        for (int c = 0; c < ch; ++c) {
          const size_t at = (static_cast<size_t>(row) * out.width + col) * ch + c;
          const double v = patch.at(j, i, c);
          // Incremental weighted average; the first contribution is stored
          // verbatim so single-source pixels reproduce the patch exactly.
          if (wsum[at] == 0.0)
            out.data[at] = v;
          else
            out.data[at] = (out.data[at] * wsum[at] + w * v) / (wsum[at] + w);
          wsum[at] += w;
        }
      }
    }
  }

  size_t miss = 0;
  for (size_t i = 0; i < out.data.size(); ++i) {
    if (wsum[i] == 0.0) {
      out.data[i] = out.nodata;
      ++miss;
    }
  }
  if (uncovered) *uncovered = miss;
  return out;
}

}  // namespace agbseq

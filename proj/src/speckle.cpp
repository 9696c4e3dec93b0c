#include "agbseq/speckle.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace agbseq {

namespace {

// Half-window membership for direction d in {0..7}. Offsets (di, dj) are
// relative to the window centre; each half contains the centre line.
bool in_half_window(int d, int di, int dj) {
  switch (d) {
    case 0: return dj >= 0;        // edge vertical, keep east side
    case 1: return dj <= 0;        //                keep west side
    case 2: return di >= 0;        // edge horizontal, keep south side
    case 3: return di <= 0;        //                  keep north side
    case 4: return di + dj >= 0;   // edge anti-diagonal
    case 5: return di + dj <= 0;
    case 6: return di - dj >= 0;   // edge main diagonal
    case 7: return di - dj <= 0;
    default: return false;
  }
}

}  // namespace

Raster refined_lee(const Raster& r, const SpeckleConfig& cfg) {
  if (r.channels != 1) throw std::invalid_argument("refined_lee: single-channel input required");
  if (cfg.window < 3 || cfg.window % 2 == 0) throw std::invalid_argument("refined_lee: window must be odd and >= 3");
  if (!(cfg.noise_cv > 0.0)) throw std::invalid_argument("refined_lee: noise_cv must be > 0");
  if (cfg.window > r.width || cfg.window > r.height)
    throw std::invalid_argument("refined_lee: window larger than raster");

  const int half = cfg.window / 2;
  const double cu2 = cfg.noise_cv * cfg.noise_cv;

  // 3x3 sub-window block boundaries along one axis, e.g. 7 -> {2,3,2}.
  const int base = cfg.window / 3, rem = cfg.window % 3;
  std::array<int, 4> edge{};
  edge[0] = 0;
  edge[1] = base + (rem == 2 ? 1 : 0);
  edge[2] = edge[1] + base + (rem >= 1 ? 1 : 0);
  edge[3] = cfg.window;

  Raster out = r;
  auto sample = [&](int col, int row) {
    return r.at(std::clamp(col, 0, r.width - 1), std::clamp(row, 0, r.height - 1));
  };

  for (int row = 0; row < r.height; ++row) {
    for (int col = 0; col < r.width; ++col) {
      // Sub-window means over the 3x3 block grid.
      double m[3][3];
      for (int bi = 0; bi < 3; ++bi)
        for (int bj = 0; bj < 3; ++bj) {
          double s = 0.0;
          int n = 0;
          for (int i = edge[bi]; i < edge[bi + 1]; ++i)
            for (int j = edge[bj]; j < edge[bj + 1]; ++j) {
              s += sample(col - half + j, row - half + i);
              ++n;
            }
          m[bi][bj] = s / n;
        }

      // Gradient axis with the largest magnitude picks the edge orientation.
      const double g[4] = {m[1][2] - m[1][0], m[2][1] - m[0][1],
                           m[2][2] - m[0][0], m[2][0] - m[0][2]};
      int axis = 0;
      for (int a = 1; a < 4; ++a)
        if (std::fabs(g[a]) > std::fabs(g[axis])) axis = a;

      // On that axis, keep the half whose endpoint mean is closer to the
      // centre sub-window mean (the low-gradient side).
      double m_pos, m_neg;
      switch (axis) {
        case 0: m_pos = m[1][2]; m_neg = m[1][0]; break;
        case 1: m_pos = m[2][1]; m_neg = m[0][1]; break;
        case 2: m_pos = m[2][2]; m_neg = m[0][0]; break;
        default: m_pos = m[2][0]; m_neg = m[0][2]; break;
      }
      const bool pos_side = std::fabs(m_pos - m[1][1]) <= std::fabs(m_neg - m[1][1]);
      const int dir = axis * 2 + (pos_side ? 0 : 1);

      // Mask statistics.
      double sum = 0.0, sum2 = 0.0;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      int n = 0;
      for (int di = -half; di <= half; ++di)
        for (int dj = -half; dj <= half; ++dj) {
          if (!in_half_window(dir, di, dj)) continue;
          const double v = sample(col + dj, row + di);
          sum += v;
          sum2 += v * v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          ++n;
        }
      // A constant mask has a mean equal to every element; short-circuit so
      // the output is bit-identical to the input rather than sum/n rounded.
      if (lo == hi) {
        out.at(col, row) = r.at(col, row);
        continue;
      }
      const double mean = sum / n;
      const double var = std::max(0.0, sum2 / n - mean * mean);

      double k = 0.0;
      if (mean != 0.0 && var > 0.0) {
        const double cx2 = var / (mean * mean);
        k = std::max(0.0, (cx2 - cu2) / (cx2 * (1.0 + cu2)));
      }
      out.at(col, row) = mean + k * (r.at(col, row) - mean);
    }
  }
  return out;
}

}  // namespace agbseq

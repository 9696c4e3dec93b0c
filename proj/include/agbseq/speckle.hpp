#pragma once

#include "agbseq/raster.hpp"

namespace agbseq {

struct SpeckleConfig {
  int window = 7;        // odd, >= 3
  double noise_cv = 0.5; // C_u of multiplicative speckle; 0.5 ~ 4-look intensity
};

// Refined Lee MMSE filter with eight edge-aligned directional half-windows.
// Per pixel: pick the gradient direction from the 3x3 grid of sub-window
// means, take statistics over the half-window on the low-gradient side, and
// blend output = m + k * (x - m) with
//   k = max(0, (Cx^2 - Cu^2) / (Cx^2 * (1 + Cu^2))),  Cx = s / m.
Raster refined_lee(const Raster& r, const SpeckleConfig& cfg = {});

}  // namespace agbseq

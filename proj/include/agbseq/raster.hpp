#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace agbseq {

// Georeferenced multi-channel grid of 64-bit floats, row-major,
// channel-interleaved per pixel. Immutable by convention after construction;
// all operations below return new rasters.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  double pixel_size = 1.0;   // metres per pixel, square pixels
  double origin_x = 0.0;     // easting of top-left corner, metres
  double origin_y = 0.0;     // northing of top-left corner, metres
  double nodata = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> data;  // width * height * channels

  Raster() = default;
  Raster(int w, int h, int c, double ps = 1.0, double ox = 0.0, double oy = 0.0)
      : width(w), height(h), channels(c), pixel_size(ps), origin_x(ox), origin_y(oy),
        data(static_cast<size_t>(w) * h * c, 0.0) {
    if (w < 1 || h < 1 || c < 1 || ps <= 0.0)
      throw std::invalid_argument("raster: invalid dimensions");
  }

  double& at(int col, int row, int ch = 0) {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  double at(int col, int row, int ch = 0) const {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  size_t size() const { return data.size(); }

  bool is_nodata(double v) const {
    return std::isnan(v) ? std::isnan(nodata) : v == nodata;
  }

  Raster channel(int ch) const;  // single-channel copy
};

// Named regressor channels derived from VV/VH backscatter.
struct BandSet {
  std::vector<std::string> names;  // VV, VH, sqrtVV, sqrtVH, VV2, VH2
  std::vector<Raster> bands;

  const Raster& band(const std::string& name) const;
};

// Exchange format: <stem>.json header + <stem>.bin little-endian f32 payload.
// `path` may carry a .json or .bin suffix; it is stripped.
Raster load_raster(const std::string& path);
void save_raster(const Raster& r, const std::string& path);

Raster to_db(const Raster& r);
Raster from_db(const Raster& r);

// Separable cubic convolution (kernel parameter a, default Catmull-Rom -0.5).
// Output covers the same ground extent; sample coordinates clamp to the
// source grid at the edges.
Raster resample_cubic(const Raster& r, double target_pixel_size, double a = -0.5);

// 3-channel composite (VV, VH, VV-VH).
Raster make_false_colour(const Raster& vv, const Raster& vh);

// Six regressor bands from linear-scale VV/VH.
BandSet derived_bands(const Raster& vv, const Raster& vh);

}  // namespace agbseq

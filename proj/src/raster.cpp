#include "agbseq/raster.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace agbseq {

Raster Raster::channel(int ch) const {
  if (ch < 0 || ch >= channels) throw std::out_of_range("raster: channel index");
  Raster out(width, height, 1, pixel_size, origin_x, origin_y);
  out.nodata = nodata;
  for (int row = 0; row < height; ++row)
    for (int col = 0; col < width; ++col) out.at(col, row) = at(col, row, ch);
  return out;
}

const Raster& BandSet::band(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return bands[i];
  throw std::invalid_argument("bandset: unknown band " + name);
}

namespace {

std::string strip_raster_suffix(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
    return path.substr(0, path.size() - 5);
  if (path.size() > 4 && path.substr(path.size() - 4) == ".bin")
    return path.substr(0, path.size() - 4);
  return path;
}

}  // namespace

Raster load_raster(const std::string& path) {
  const std::string stem = strip_raster_suffix(path);
  std::ifstream hdr(stem + ".json");
  if (!hdr) throw std::runtime_error("raster: cannot open " + stem + ".json");
  json j = json::parse(hdr);

  Raster r;
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  r.channels = j.at("channels").get<int>();
  r.pixel_size = j.at("pixel_size_m").get<double>();
  r.origin_x = j.at("origin_x_m").get<double>();
  r.origin_y = j.at("origin_y_m").get<double>();
  if (j.at("nodata").is_null())
    r.nodata = std::numeric_limits<double>::quiet_NaN();
  else
    r.nodata = j.at("nodata").get<double>();
  if (j.at("dtype").get<std::string>() != "f32")
    throw std::runtime_error("raster: unsupported dtype");
  if (r.width < 1 || r.height < 1 || r.channels < 1 || !(r.pixel_size > 0.0) ||
      !std::isfinite(r.pixel_size) || !std::isfinite(r.origin_x) || !std::isfinite(r.origin_y))
    throw std::runtime_error("raster: non-finite or invalid header fields");

  const size_t n = static_cast<size_t>(r.width) * r.height * r.channels;
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("raster: cannot open " + stem + ".bin");
  bin.seekg(0, std::ios::end);
  const size_t bytes = static_cast<size_t>(bin.tellg());
  if (bytes != n * sizeof(float))
    throw std::runtime_error("raster: payload size mismatch in " + stem + ".bin");
  bin.seekg(0);
  std::vector<float> buf(n);
  bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  r.data.assign(buf.begin(), buf.end());
  return r;
}

void save_raster(const Raster& r, const std::string& path) {
  if (r.data.size() != static_cast<size_t>(r.width) * r.height * r.channels)
    throw std::invalid_argument("raster: data length does not match dimensions");
  const std::string stem = strip_raster_suffix(path);
  const fs::path parent = fs::path(stem).parent_path();
  if (!parent.empty()) fs::create_directories(parent);

  json j;
  j["width"] = r.width;
  j["height"] = r.height;
  j["channels"] = r.channels;
  j["pixel_size_m"] = r.pixel_size;
  j["origin_x_m"] = r.origin_x;
  j["origin_y_m"] = r.origin_y;
  if (std::isnan(r.nodata))
    j["nodata"] = nullptr;
  else
    j["nodata"] = r.nodata;
  j["dtype"] = "f32";
  std::ofstream hdr(stem + ".json");
  if (!hdr) throw std::runtime_error("raster: cannot write " + stem + ".json");
  hdr << j.dump(2) << "\n";

  std::vector<float> buf(r.data.begin(), r.data.end());
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("raster: cannot write " + stem + ".bin");
  bin.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Raster to_db(const Raster& r) {
  Raster out = r;
  for (size_t i = 0; i < r.data.size(); ++i) {
    const double v = r.data[i];
    if (r.is_nodata(v)) continue;
    if (!std::isfinite(v)) continue;
    if (v <= 0.0) {
      const size_t pix = i / r.channels;
      throw std::domain_error("to_db: non-positive value at pixel (col=" +
                              std::to_string(pix % r.width) + ", row=" +
                              std::to_string(pix / r.width) + ")");
    }
    out.data[i] = 10.0 * std::log10(v);
  }
  return out;
}

Raster from_db(const Raster& r) {
  Raster out = r;
  for (size_t i = 0; i < r.data.size(); ++i) {
    const double v = r.data[i];
    if (r.is_nodata(v) || !std::isfinite(v)) continue;
    out.data[i] = std::pow(10.0, v / 10.0);
  }
  return out;
}

namespace {

// Keys' cubic convolution kernel with parameter a.
double cubic_kernel(double t, double a) {
  t = std::fabs(t);
  if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

Raster resample_cubic(const Raster& r, double target_pixel_size, double a) {
  if (!(target_pixel_size > 0.0)) throw std::invalid_argument("resample: target pixel size must be > 0");
  if (r.width < 4 || r.height < 4)
    throw std::invalid_argument("resample: raster smaller than 4x4 kernel support");

  const double ext_x = r.width * r.pixel_size;
  const double ext_y = r.height * r.pixel_size;
  const int out_w = std::max(1, static_cast<int>(std::lround(ext_x / target_pixel_size)));
  const int out_h = std::max(1, static_cast<int>(std::lround(ext_y / target_pixel_size)));

  Raster out(out_w, out_h, r.channels, target_pixel_size, r.origin_x, r.origin_y);
  out.nodata = r.nodata;

  for (int row = 0; row < out_h; ++row) {
    const double sy = ((row + 0.5) * target_pixel_size) / r.pixel_size - 0.5;
    const int iy = static_cast<int>(std::floor(sy));
    const double fy = sy - iy;
    for (int col = 0; col < out_w; ++col) {
      const double sx = ((col + 0.5) * target_pixel_size) / r.pixel_size - 0.5;
      const int ix = static_cast<int>(std::floor(sx));
      const double fx = sx - ix;
      for (int ch = 0; ch < r.channels; ++ch) {
        double acc = 0.0, wsum = 0.0;
        for (int m = -1; m <= 2; ++m) {
          const double wy = cubic_kernel(m - fy, a);
          if (wy == 0.0) continue;
          const int srow = std::clamp(iy + m, 0, r.height - 1);
          for (int n = -1; n <= 2; ++n) {
            const double wx = cubic_kernel(n - fx, a);
            if (wx == 0.0) continue;
            const int scol = std::clamp(ix + n, 0, r.width - 1);
            acc += wy * wx * r.at(scol, srow, ch);
            wsum += wy * wx;
          }
        }
        out.at(col, row, ch) = acc / wsum;
      }
    }
  }
  return out;
}

Raster make_false_colour(const Raster& vv, const Raster& vh) {
  if (vv.channels != 1 || vh.channels != 1)
    throw std::invalid_argument("false_colour: inputs must be single-channel");
  if (vv.width != vh.width || vv.height != vh.height)
    throw std::invalid_argument("false_colour: dimension mismatch");
  Raster out(vv.width, vv.height, 3, vv.pixel_size, vv.origin_x, vv.origin_y);
  out.nodata = vv.nodata;
  for (int row = 0; row < vv.height; ++row)
    for (int col = 0; col < vv.width; ++col) {
      const double a = vv.at(col, row), b = vh.at(col, row);
      out.at(col, row, 0) = a;
      out.at(col, row, 1) = b;
      out.at(col, row, 2) = a - b;
    }
  return out;
}

BandSet derived_bands(const Raster& vv, const Raster& vh) {
  if (vv.width != vh.width || vv.height != vh.height)
    throw std::invalid_argument("derived_bands: dimension mismatch");
  for (const Raster* r : {&vv, &vh})
    for (double v : r->data)
      if (std::isfinite(v) && !r->is_nodata(v) && v < 0.0)
        throw std::domain_error("derived_bands: negative linear-scale value");

  BandSet bs;
  bs.names = {"VV", "VH", "sqrtVV", "sqrtVH", "VV2", "VH2"};
  auto map = [](const Raster& r, auto f) {
    Raster out = r;
    for (size_t i = 0; i < r.data.size(); ++i)
      if (!r.is_nodata(r.data[i])) out.data[i] = f(r.data[i]);
    return out;
  };
  bs.bands.push_back(vv);
  bs.bands.push_back(vh);
  bs.bands.push_back(map(vv, [](double v) { return std::sqrt(v); }));
  bs.bands.push_back(map(vh, [](double v) { return std::sqrt(v); }));
  bs.bands.push_back(map(vv, [](double v) { return v * v; }));
  bs.bands.push_back(map(vh, [](double v) { return v * v; }));
  return bs;
}

}  // namespace agbseq

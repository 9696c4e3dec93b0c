#include "agbseq/plots.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace agbseq {

std::vector<PlotRecord> load_plots(const std::string& path, double agb_ceiling) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("plots: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("plots: empty file " + path);

  std::vector<PlotRecord> plots;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5)
      throw std::runtime_error("plots: line " + std::to_string(lineno) + ": expected 5 columns");
    PlotRecord p;
    p.id = fields[0];
    try {
      size_t pos;
      p.centre_x = std::stod(fields[1], &pos);
      p.centre_y = std::stod(fields[2]);
      p.radius = std::stod(fields[3]);
      p.agb = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw std::runtime_error("plots: line " + std::to_string(lineno) + ": non-numeric field");
    }
    if (!(p.radius > 0.0))
      throw std::runtime_error("plots: line " + std::to_string(lineno) + ": radius must be > 0");
    if (p.agb < 0.0 || p.agb > agb_ceiling)
      throw std::runtime_error("plots: line " + std::to_string(lineno) +
                               ": AGB outside [0, " + std::to_string(agb_ceiling) + "]");
    plots.push_back(p);
  }
  return plots;
}

void save_plots(const std::vector<PlotRecord>& plots, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("plots: cannot write " + path);
  out << "plot_id,center_x_m,center_y_m,radius_m,agb_mg_ha\n";
  out.precision(17);
  for (const auto& p : plots)
    out << p.id << "," << p.centre_x << "," << p.centre_y << "," << p.radius << ","
        << p.agb << "\n";
}

double area_weighted_mean(const Raster& r, const PlotRecord& p, int subsamples, int channel) {
  // Circle centre in fractional pixel coordinates (origin = top-left corner,
  // northing decreases with row index).
  const double cx = (p.centre_x - r.origin_x) / r.pixel_size;
  const double cy = (r.origin_y - p.centre_y) / r.pixel_size;
  const double rad = p.radius / r.pixel_size;

  const int col0 = static_cast<int>(std::floor(cx - rad));
  const int col1 = static_cast<int>(std::floor(cx + rad));
  const int row0 = static_cast<int>(std::floor(cy - rad));
  const int row1 = static_cast<int>(std::floor(cy + rad));
  if (col1 < 0 || row1 < 0 || col0 >= r.width || row0 >= r.height)
    throw std::invalid_argument("area_weighted_mean: plot circle outside raster extent");

  const double r2 = rad * rad;
  double wsum = 0.0, vsum = 0.0;
  for (int row = std::max(0, row0); row <= std::min(r.height - 1, row1); ++row) {
    for (int col = std::max(0, col0); col <= std::min(r.width - 1, col1); ++col) {
      const double v = r.at(col, row, channel);
      if (r.is_nodata(v)) continue;
      // Fractional coverage from sub-cell centres inside the circle.
      int inside = 0;
      for (int si = 0; si < subsamples; ++si) {
        const double py = row + (si + 0.5) / subsamples - cy;
        for (int sj = 0; sj < subsamples; ++sj) {
          const double px = col + (sj + 0.5) / subsamples - cx;
          if (px * px + py * py <= r2) ++inside;
        }
      }
      if (inside == 0) continue;
      const double a = static_cast<double>(inside) / (subsamples * subsamples);
      wsum += a;
      vsum += a * v;
    }
  }
  if (wsum == 0.0)
    throw std::invalid_argument("area_weighted_mean: no valid pixels intersect the plot");
  return vsum / wsum;
}

}  // namespace agbseq

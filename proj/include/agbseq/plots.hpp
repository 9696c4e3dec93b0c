#pragma once

#include <string>
#include <vector>

#include "agbseq/raster.hpp"

namespace agbseq {

// One circular field plot with its measured above-ground biomass.
struct PlotRecord {
  std::string id;
  double centre_x = 0.0;  // easting, metres
  double centre_y = 0.0;  // northing, metres
  double radius = 15.0;   // metres
  double agb = 0.0;       // Mg/ha
};

// CSV with header: plot_id,center_x_m,center_y_m,radius_m,agb_mg_ha
std::vector<PlotRecord> load_plots(const std::string& path, double agb_ceiling = 500.0);
void save_plots(const std::vector<PlotRecord>& plots, const std::string& path);

// Area-weighted mean of raster values under the plot circle. Intersection
// areas come from deterministic sub-sampling of each candidate pixel
// (sub-cell centre inside the circle counts). Nodata pixels are excluded.
double area_weighted_mean(const Raster& r, const PlotRecord& p, int subsamples = 32,
                          int channel = 0);

}  // namespace agbseq

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "agbseq/raster.hpp"

namespace agbseq {

struct SummaryStats {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct MetricReport {
  double r = 0.0;     // Pearson correlation
  double rmse = 0.0;  // Mg/ha
  double mae = 0.0;   // Mg/ha
  size_t n = 0;
  std::optional<std::array<double, 4>> quartile_rmse;
  std::optional<SummaryStats> summary;
};

enum class CalibrationMethod { Linear, Gamma, Exponential, NthRoot, Logarithmic };

CalibrationMethod calibration_method_from_string(const std::string& s);
std::string to_string(CalibrationMethod m);

// Two-parameter least-squares calibration of predictions against reference:
//   linear:      z ~ a * pred + b
//   gamma:       z ~ a * pred^g
//   exponential: z ~ a * exp(b * pred)
//   nth-root:    z ~ a * pred^(1/n) + b   (n fitted, param2 = n)
//   logarithmic: z ~ a * ln(pred) + b
struct CalibrationModel {
  CalibrationMethod method = CalibrationMethod::Linear;
  double param1 = 1.0;  // a
  double param2 = 0.0;  // b / gamma / rate / n
  double offset = 0.0;  // nth-root only: additive b
  double sse = 0.0;
  bool converged = true;  // false when Gauss-Newton fell back to the grid point
};

double pearson_r(const std::vector<double>& a, const std::vector<double>& b);
MetricReport paired_metrics(const std::vector<double>& a, const std::vector<double>& b);

// RMSE per reference-defined quartile bin (type-7 quantiles, right-closed
// upper edges).
std::array<double, 4> quartile_rmse(const std::vector<double>& reference,
                                    const std::vector<double>& predicted);

// Type-7 empirical quantile (linear interpolation), q in [0, 1].
double quantile_type7(std::vector<double> values, double q);

// Pixel-wise Pearson R between co-registered maps; pairs with nodata in
// either map are excluded.
double map_correlation(const Raster& m1, const Raster& m2);

SummaryStats distribution_summary(const Raster& r);
// Histogram over valid pixels; CSV columns: bin_low,bin_high,count
void write_histogram_csv(const Raster& r, const std::string& path, int bins = 50);

CalibrationModel fit_calibration(const std::vector<double>& pred, const std::vector<double>& z,
                                 CalibrationMethod method);
std::vector<double> apply_calibration(const CalibrationModel& m, const std::vector<double>& pred);
Raster apply_calibration(const CalibrationModel& m, const Raster& pred);

}  // namespace agbseq

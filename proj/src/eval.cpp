#include "agbseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace agbseq {

CalibrationMethod calibration_method_from_string(const std::string& s) {
  if (s == "linear") return CalibrationMethod::Linear;
  if (s == "gamma") return CalibrationMethod::Gamma;
  if (s == "exponential") return CalibrationMethod::Exponential;
  if (s == "nth-root") return CalibrationMethod::NthRoot;
  if (s == "logarithmic") return CalibrationMethod::Logarithmic;
  throw std::invalid_argument("calibration: unknown method " + s);
}

std::string to_string(CalibrationMethod m) {
  switch (m) {
    case CalibrationMethod::Linear: return "linear";
    case CalibrationMethod::Gamma: return "gamma";
    case CalibrationMethod::Exponential: return "exponential";
    case CalibrationMethod::NthRoot: return "nth-root";
    case CalibrationMethod::Logarithmic: return "logarithmic";
  }
  return "?";
}

namespace {

void check_pair(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("metrics: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("metrics: need at least 2 pairs");
  for (size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw std::invalid_argument("metrics: non-finite value");
}

}  // namespace

double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
  check_pair(a, b);
  const size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw std::invalid_argument("pearson_r: zero variance input");
  return sab / std::sqrt(saa * sbb);
}

MetricReport paired_metrics(const std::vector<double>& a, const std::vector<double>& b) {
  check_pair(a, b);
  MetricReport rep;
  rep.n = a.size();
  double se = 0.0, ae = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
    ae += std::fabs(d);
  }
  rep.rmse = std::sqrt(se / a.size());
  rep.mae = ae / a.size();
  rep.r = pearson_r(a, b);
  return rep;
}

double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

std::array<double, 4> quartile_rmse(const std::vector<double>& reference,
                                    const std::vector<double>& predicted) {
  check_pair(reference, predicted);
  const double q1 = quantile_type7(reference, 0.25);
  const double q2 = quantile_type7(reference, 0.50);
  const double q3 = quantile_type7(reference, 0.75);

  std::array<double, 4> se{}, cnt{};
  for (size_t i = 0; i < reference.size(); ++i) {
    const double v = reference[i];
    int bin = v <= q1 ? 0 : v <= q2 ? 1 : v <= q3 ? 2 : 3;
    const double d = reference[i] - predicted[i];
    se[bin] += d * d;
    cnt[bin] += 1.0;
  }
  std::array<double, 4> out{};
  for (int b = 0; b < 4; ++b) out[b] = cnt[b] > 0 ? std::sqrt(se[b] / cnt[b]) : 0.0;
  return out;
}

double map_correlation(const Raster& m1, const Raster& m2) {
  if (m1.width != m2.width || m1.height != m2.height || m1.channels != 1 || m2.channels != 1)
    throw std::invalid_argument("map_correlation: co-registered single-channel maps required");
  std::vector<double> a, b;
  a.reserve(m1.data.size());
  b.reserve(m1.data.size());
  for (size_t i = 0; i < m1.data.size(); ++i) {
    const double v1 = m1.data[i], v2 = m2.data[i];
    if (m1.is_nodata(v1) || m2.is_nodata(v2)) continue;
    a.push_back(v1);
    b.push_back(v2);
  }
  return pearson_r(a, b);
}

SummaryStats distribution_summary(const Raster& r) {
  std::vector<double> v;
  v.reserve(r.data.size());
  for (double x : r.data)
    if (!r.is_nodata(x)) v.push_back(x);
  if (v.empty()) throw std::invalid_argument("summary: no valid pixels");
  SummaryStats s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  s.median = quantile_type7(v, 0.5);
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  s.min = *mn;
  s.max = *mx;
  return s;
}

void write_histogram_csv(const Raster& r, const std::string& path, int bins) {
  const SummaryStats s = distribution_summary(r);
  const double lo = s.min, hi = s.max;
  const double w = (hi - lo) / bins;
  std::vector<size_t> counts(bins, 0);
  for (double v : r.data) {
    if (r.is_nodata(v)) continue;
    int b = w > 0 ? std::min(bins - 1, static_cast<int>((v - lo) / w)) : 0;
    ++counts[b];
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("histogram: cannot write " + path);
  out << "bin_low,bin_high,count\n";
  out.precision(17);
  for (int b = 0; b < bins; ++b)
    out << lo + b * w << "," << lo + (b + 1) * w << "," << counts[b] << "\n";
}

namespace {

double calib_eval(CalibrationMethod m, double p1, double p2, double x) {
  switch (m) {
    case CalibrationMethod::Linear: return p1 * x + p2;
    case CalibrationMethod::Gamma: return p1 * std::pow(x, p2);
    case CalibrationMethod::Exponential: return p1 * std::exp(p2 * x);
    case CalibrationMethod::NthRoot: {
      // param layout: p1 = a, p2 packs (n); offset b is refit linearly below,
      // so store it alongside via the model's b slot. Handled in fit.
      return p1 * std::pow(x, 1.0 / p2);
    }
    case CalibrationMethod::Logarithmic: return p1 * std::log(x) + p2;
  }
  return 0.0;
}

double sse_of(const std::vector<double>& pred, const std::vector<double>& z,
              const std::function<double(double)>& f) {
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = f(pred[i]) - z[i];
    s += d * d;
  }
  return s;
}

// Closed-form LSQ of z ~ a*u + b on transformed regressor u.
void linear_lsq(const std::vector<double>& u, const std::vector<double>& z, double& a, double& b) {
  const size_t n = u.size();
  double mu = 0.0, mz = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mu += u[i];
    mz += z[i];
  }
  mu /= n;
  mz /= n;
  double suu = 0.0, suz = 0.0;
  for (size_t i = 0; i < n; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suz += (u[i] - mu) * (z[i] - mz);
  }
  a = suu > 0 ? suz / suu : 0.0;
  b = mz - a * mu;
}

}  // namespace

CalibrationModel fit_calibration(const std::vector<double>& pred, const std::vector<double>& z,
                                 CalibrationMethod method) {
  check_pair(pred, z);
  const bool log_family = method == CalibrationMethod::Gamma ||
                          method == CalibrationMethod::Logarithmic ||
                          method == CalibrationMethod::NthRoot;
  if (log_family)
    for (double p : pred)
      if (!(p > 0.0))
        throw std::invalid_argument("calibration: non-positive prediction for log-family method");

  CalibrationModel m;
  m.method = method;
  const size_t n = pred.size();

  if (method == CalibrationMethod::Linear) {
    linear_lsq(pred, z, m.param1, m.param2);
    m.sse = sse_of(pred, z, [&](double x) { return m.param1 * x + m.param2; });
    return m;
  }
  if (method == CalibrationMethod::Logarithmic) {
    std::vector<double> u(n);
    for (size_t i = 0; i < n; ++i) u[i] = std::log(pred[i]);
    linear_lsq(u, z, m.param1, m.param2);
    m.sse = sse_of(pred, z, [&](double x) { return m.param1 * std::log(x) + m.param2; });
    return m;
  }

  // One nonlinear parameter t; conditional on t the scale (and offset for
  // nth-root) is a closed-form linear fit. Coarse grid then Gauss-Newton on t.
  struct Conditional {
    double a = 0.0, b = 0.0, sse = 0.0;
  };
  auto conditional_fit = [&](double t) {
    Conditional c;
    std::vector<double> u(n);
    if (method == CalibrationMethod::Gamma) {
      double suz = 0.0, suu = 0.0;
      for (size_t i = 0; i < n; ++i) {
        u[i] = std::pow(pred[i], t);
        suz += u[i] * z[i];
        suu += u[i] * u[i];
      }
      c.a = suu > 0 ? suz / suu : 0.0;  // no offset in the gamma form
    } else if (method == CalibrationMethod::Exponential) {
      double suz = 0.0, suu = 0.0;
      for (size_t i = 0; i < n; ++i) {
        u[i] = std::exp(t * pred[i]);
        suz += u[i] * z[i];
        suu += u[i] * u[i];
      }
      c.a = suu > 0 ? suz / suu : 0.0;
    } else {  // NthRoot: z ~ a * pred^(1/t) + b
      for (size_t i = 0; i < n; ++i) u[i] = std::pow(pred[i], 1.0 / t);
      linear_lsq(u, z, c.a, c.b);
    }
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = c.a * u[i] + c.b - z[i];
      s += d * d;
    }
    c.sse = s;
    return c;
  };

  std::vector<double> grid;
  if (method == CalibrationMethod::Gamma || method == CalibrationMethod::NthRoot) {
    for (double t = 0.05; t <= 5.0 + 1e-12; t += 0.05) grid.push_back(t);
  } else {
    for (double t = -0.5; t <= 0.5 + 1e-12; t += 0.005)
      if (std::fabs(t) > 1e-9) grid.push_back(t);
  }
  double best_t = grid.front();
  Conditional best = conditional_fit(best_t);
  for (double t : grid) {
    const Conditional c = conditional_fit(t);
    if (c.sse < best.sse) {
      best = c;
      best_t = t;
    }
  }

  // Gauss-Newton refinement on t via numeric derivative of SSE(t)'s residuals.
  double t = best_t;
  Conditional cur = best;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const double h = std::max(1e-7, 1e-6 * std::fabs(t));
    const Conditional cp = conditional_fit(t + h);
    const Conditional cm = conditional_fit(t - h);
    const double d1 = (cp.sse - cm.sse) / (2 * h);
    const double d2 = (cp.sse - 2 * cur.sse + cm.sse) / (h * h);
    if (!(std::isfinite(d1) && std::isfinite(d2)) || d2 <= 0) break;
    const double step = d1 / d2;
    const double t_new = t - step;
    const Conditional c_new = conditional_fit(t_new);
    if (!std::isfinite(c_new.sse) || c_new.sse > cur.sse) {
      // A step that can't improve a near-stationary SSE means we're done.
      converged = std::isfinite(c_new.sse) &&
                  std::fabs(c_new.sse - cur.sse) < 1e-10 * std::max(1.0, cur.sse);
      break;
    }
    const bool done = std::fabs(cur.sse - c_new.sse) < 1e-10 * std::max(1.0, cur.sse);
    t = t_new;
    cur = c_new;
    if (done) {
      converged = true;
      break;
    }
  }
  if (cur.sse > best.sse) {  // never worse than the best grid candidate
    cur = best;
    t = best_t;
    converged = false;
  }

  m.param1 = cur.a;
  m.param2 = t;
  m.sse = cur.sse;
  m.converged = converged;
  if (method == CalibrationMethod::NthRoot) m.offset = cur.b;
  return m;
}

std::vector<double> apply_calibration(const CalibrationModel& m, const std::vector<double>& pred) {
  std::vector<double> out(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    double v;
    if (m.method == CalibrationMethod::NthRoot)
      v = m.param1 * std::pow(pred[i], 1.0 / m.param2) + m.offset;
    else
      v = calib_eval(m.method, m.param1, m.param2, pred[i]);
    out[i] = std::max(0.0, v);  // AGB non-negativity
  }
  return out;
}

Raster apply_calibration(const CalibrationModel& m, const Raster& pred) {
  Raster out = pred;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (pred.is_nodata(pred.data[i])) continue;
    double v;
    if (m.method == CalibrationMethod::NthRoot)
      v = m.param1 * std::pow(pred.data[i], 1.0 / m.param2) + m.offset;
    else
      v = calib_eval(m.method, m.param1, m.param2, pred.data[i]);
    out.data[i] = std::max(0.0, v);
  }
  return out;
}

}  // namespace agbseq

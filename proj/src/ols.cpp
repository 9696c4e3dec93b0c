#include "agbseq/ols.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

using nlohmann::json;

namespace agbseq {

const std::vector<double>& DesignMatrix::column(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return columns[i];
  throw std::invalid_argument("design: unknown column " + name);
}

void DesignMatrix::validate() const {
  if (names.size() != columns.size())
    throw std::invalid_argument("design: names/columns size mismatch");
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].size() != response.size())
      throw std::invalid_argument("design: column " + names[i] + " length mismatch");
    for (double v : columns[i])
      if (!std::isfinite(v)) throw std::invalid_argument("design: non-finite entry in " + names[i]);
  }
  for (double v : response)
    if (!std::isfinite(v)) throw std::invalid_argument("design: non-finite response entry");
}

namespace {

OlsFit fit_rows(const DesignMatrix& X, const std::vector<std::string>& cols,
                const std::vector<int>& rows) {
  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(cols.size()) + 1;
  if (n <= p) throw std::invalid_argument("ols: need n > number of columns + 1");

  Eigen::MatrixXd M(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    M(i, 0) = 1.0;
    y(i) = X.response[rows[i]];
    for (int j = 0; j < p - 1; ++j) M(i, j + 1) = X.column(cols[j])[rows[i]];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    // Find the first column that is dependent on its predecessors.
    for (int j = 1; j < p; ++j) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> sub(M.leftCols(j + 1));
      sub.setThreshold(1e-10);
      if (sub.rank() < j + 1)
        throw std::invalid_argument("ols: rank deficiency, collinear column " + cols[j - 1]);
    }
    throw std::invalid_argument("ols: rank-deficient design");
  }

  Eigen::VectorXd beta = qr.solve(y);
  Eigen::VectorXd resid = y - M * beta;

  OlsFit fit;
  fit.intercept = beta(0);
  fit.coefficients.assign(beta.data() + 1, beta.data() + p);
  fit.rss = resid.squaredNorm();
  fit.df = n - p;
  fit.mse = fit.rss / fit.df;
  return fit;
}

std::vector<int> all_rows(const DesignMatrix& X) {
  std::vector<int> rows(X.n());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

double predict_sqrt_scale(const OlsFit& fit, const DesignMatrix& X,
                          const std::vector<std::string>& cols, int row) {
  double s = fit.intercept;
  for (size_t j = 0; j < cols.size(); ++j) s += fit.coefficients[j] * X.column(cols[j])[row];
  return s;
}

}  // namespace

OlsFit fit_ols(const DesignMatrix& X, const std::vector<std::string>& cols) {
  X.validate();
  return fit_rows(X, cols, all_rows(X));
}

// Continued-fraction evaluation of the regularised incomplete beta function
// (Lentz's method, as in Numerical Recipes).
double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;

  auto betacf = [](double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
      const int m2 = 2 * m;
      double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::fabs(del - 1.0) < 1e-14) break;
    }
    return h;
  };

  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   betacf(b, a, 1.0 - x) / b;
}

double f_test_p_value(double f, int df) {
  if (df < 1) throw std::invalid_argument("f_test: df must be >= 1");
  if (f <= 0.0) return 1.0;
  // P(F(1, df) > f) = I_{df/(df + f)}(df/2, 1/2)
  return incomplete_beta(df / 2.0, 0.5, df / (df + f));
}

FTestResult partial_f_test(double rss_reduced, double rss_full, int n, int p_full) {
  const int df = n - p_full;
  if (df < 1) throw std::invalid_argument("partial_f_test: n - p_full must be >= 1");
  if (rss_full < 0.0 || rss_reduced < rss_full - 1e-9 * std::max(1.0, rss_reduced))
    throw std::invalid_argument("partial_f_test: need rss_reduced >= rss_full >= 0");
  if (rss_full == 0.0) {
    if (rss_reduced > 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
    return {0.0, 1.0};
  }
  FTestResult res;
  res.F = std::max(0.0, rss_reduced - rss_full) / (rss_full / df);
  res.p_value = f_test_p_value(res.F, df);
  return res;
}

std::vector<std::string> stepwise_forward(const DesignMatrix& X, double alpha) {
  X.validate();
  if (X.names.empty()) throw std::invalid_argument("stepwise: no candidate columns");

  std::vector<std::string> candidates = X.names;
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::string> selected;

  OlsFit current = fit_ols(X, selected);
  while (!candidates.empty()) {
    std::string best;
    OlsFit best_fit;
    double best_f = -1.0, best_p = 1.0;
    std::vector<std::string> rejected;
    for (const auto& cand : candidates) {
      std::vector<std::string> trial = selected;
      trial.push_back(cand);
      OlsFit fit;
      try {
        fit = fit_ols(X, trial);
      } catch (const std::invalid_argument&) {
        rejected.push_back(cand);  // collinear with the current selection
        continue;
      }
      const auto ft =
          partial_f_test(current.rss, fit.rss, static_cast<int>(X.n()),
                         static_cast<int>(trial.size()) + 1);
      if (ft.F > best_f) {  // strict >: ties keep the lexicographically first
        best_f = ft.F;
        best_p = ft.p_value;
        best = cand;
        best_fit = fit;
      }
    }
    for (const auto& c : rejected)
      candidates.erase(std::find(candidates.begin(), candidates.end(), c));
    if (best.empty() || best_p >= alpha) break;
    selected.push_back(best);
    current = best_fit;
    candidates.erase(std::find(candidates.begin(), candidates.end(), best));
  }
  return selected;
}

SqrtRegressionModel fit_sqrt_model(const DesignMatrix& X, double alpha) {
  X.validate();
  for (double v : X.response)
    if (v < 0.0) throw std::invalid_argument("fit_sqrt_model: negative response");

  DesignMatrix Xs = X;
  for (double& v : Xs.response) v = std::sqrt(v);

  SqrtRegressionModel m;
  m.selected = stepwise_forward(Xs, alpha);
  const OlsFit fit = fit_ols(Xs, m.selected);
  m.intercept = fit.intercept;
  for (size_t j = 0; j < m.selected.size(); ++j)
    m.coefficients[m.selected[j]] = fit.coefficients[j];
  m.mse = fit.mse;
  return m;
}

double predict_agb(const SqrtRegressionModel& m, const std::map<std::string, double>& regressors) {
  double s = m.intercept;
  for (const auto& [name, coef] : m.coefficients) {
    const auto it = regressors.find(name);
    if (it == regressors.end())
      throw std::invalid_argument("predict_agb: missing regressor " + name);
    s += coef * it->second;
  }
  return s * s + m.mse;
}

namespace {

// Refit on the given rows (sqrt scale fit of the already-sqrt response is the
// caller's responsibility; here X.response is the arithmetic AGB).
double cv_rmse_on_partition(const DesignMatrix& X, const std::vector<std::string>& cols,
                            const std::vector<std::vector<int>>& folds) {
  DesignMatrix Xs = X;
  for (double& v : Xs.response) {
    if (v < 0.0) throw std::invalid_argument("cv: negative response");
    v = std::sqrt(v);
  }

  std::vector<double> fold_rmse;
  for (const auto& test : folds) {
    std::vector<char> in_test(X.n(), 0);
    for (int i : test) in_test[i] = 1;
    std::vector<int> train;
    for (size_t i = 0; i < X.n(); ++i)
      if (!in_test[i]) train.push_back(static_cast<int>(i));

    const OlsFit fit = fit_rows(Xs, cols, train);
    double se = 0.0;
    for (int i : test) {
      const double s = predict_sqrt_scale(fit, Xs, cols, i);
      const double pred = s * s + fit.mse;
      const double err = pred - X.response[i];
      se += err * err;
    }
    fold_rmse.push_back(std::sqrt(se / test.size()));
  }
  double acc = 0.0;
  for (double v : fold_rmse) acc += v;
  return acc / fold_rmse.size();
}

}  // namespace

double loocv_rmse(const DesignMatrix& X, const std::vector<std::string>& cols) {
  X.validate();
  const int n = static_cast<int>(X.n());
  if (n < static_cast<int>(cols.size()) + 3)
    throw std::invalid_argument("loocv: need n >= selected + 3");

  DesignMatrix Xs = X;
  for (double& v : Xs.response) {
    if (v < 0.0) throw std::invalid_argument("loocv: negative response");
    v = std::sqrt(v);
  }
  double se = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<int> train;
    train.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) train.push_back(j);
    const OlsFit fit = fit_rows(Xs, cols, train);
    const double s = predict_sqrt_scale(fit, Xs, cols, i);
    const double err = (s * s + fit.mse) - X.response[i];
    se += err * err;
  }
  return std::sqrt(se / n);
}

double kfold_cv_rmse(const DesignMatrix& X, const std::vector<std::string>& cols, int k,
                     unsigned long long seed) {
  X.validate();
  const int n = static_cast<int>(X.n());
  if (k < 2 || k > n) throw std::invalid_argument("kfold: k must be in [2, n]");

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::vector<std::vector<int>> folds(k);
  for (int i = 0; i < n; ++i) folds[i % k].push_back(idx[i]);
  return cv_rmse_on_partition(X, cols, folds);
}

void save_model(const SqrtRegressionModel& m, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  json j;
  j["intercept"] = m.intercept;
  j["coefficients"] = json::object();
  for (const auto& [name, coef] : m.coefficients) j["coefficients"][name] = coef;
  j["mse"] = m.mse;
  j["selected"] = m.selected;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("model: cannot write " + path);
  out << j.dump(2) << "\n";
}

SqrtRegressionModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("model: cannot open " + path);
  json j = json::parse(in);
  SqrtRegressionModel m;
  m.intercept = j.at("intercept").get<double>();
  for (const auto& [name, coef] : j.at("coefficients").items())
    m.coefficients[name] = coef.get<double>();
  m.mse = j.at("mse").get<double>();
  m.selected = j.at("selected").get<std::vector<std::string>>();
  return m;
}

}  // namespace agbseq

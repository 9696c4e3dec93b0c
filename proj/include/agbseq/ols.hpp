#pragma once

#include <map>
#include <string>
#include <vector>

namespace agbseq {

// Observations by named candidate regressor columns plus a response vector.
struct DesignMatrix {
  std::vector<std::string> names;           // candidate regressors
  std::vector<std::vector<double>> columns; // one vector per name, length n
  std::vector<double> response;             // length n

  size_t n() const { return response.size(); }
  const std::vector<double>& column(const std::string& name) const;
  void validate() const;  // finite entries, consistent lengths
};

struct OlsFit {
  double intercept = 0.0;
  std::vector<double> coefficients;  // aligned with the fitted column order
  double rss = 0.0;
  double mse = 0.0;  // rss / (n - p), p including intercept
  int df = 0;        // n - p
};

struct FTestResult {
  double F = 0.0;
  double p_value = 1.0;
};

// Sqrt-scale AGB model: E[sqrt(AGB)] = intercept + sum_j coef_j * x_j,
// back-transformed as AGB_hat = (.)^2 + mse.
struct SqrtRegressionModel {
  double intercept = 0.0;
  std::map<std::string, double> coefficients;
  double mse = 0.0;                   // sqrt-scale residual MSE
  std::vector<std::string> selected;  // stepwise selection order
};

// Least squares on the named columns (intercept always included), solved by
// pivoted QR; rank deficiency reported with the name of the offending column.
OlsFit fit_ols(const DesignMatrix& X, const std::vector<std::string>& cols);

// Partial F-test for one added regressor: F(1, n - p_full).
FTestResult partial_f_test(double rss_reduced, double rss_full, int n, int p_full);

// Forward selection: repeatedly add the candidate with the largest partial F
// (ties by name order) while its p-value < alpha.
std::vector<std::string> stepwise_forward(const DesignMatrix& X, double alpha = 0.05);

// Stepwise fit on the sqrt-transformed response.
SqrtRegressionModel fit_sqrt_model(const DesignMatrix& X, double alpha = 0.05);

double predict_agb(const SqrtRegressionModel& m, const std::map<std::string, double>& regressors);

// Cross-validation on the arithmetic AGB scale with a fixed column set;
// coefficients and mse are refit per fold.
double loocv_rmse(const DesignMatrix& X, const std::vector<std::string>& cols);
double kfold_cv_rmse(const DesignMatrix& X, const std::vector<std::string>& cols, int k = 5,
                     unsigned long long seed = 0);

// Upper-tail probability of F(1, df) at f, via the regularised incomplete
// beta function (continued fraction, abs error < 1e-10).
double f_test_p_value(double f, int df);

// Regularised incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Model JSON: {intercept, coefficients:{name:value}, mse, selected:[names]}
void save_model(const SqrtRegressionModel& m, const std::string& path);
SqrtRegressionModel load_model(const std::string& path);

}  // namespace agbseq

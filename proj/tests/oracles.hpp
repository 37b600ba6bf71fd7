#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of them share numerical code with the library.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

/// beta = (X'X + P)^-1 X'y by a dense LDLT solve of the normal equations.
inline Eigen::VectorXd penalized_normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                  const Eigen::MatrixXd& penalty) {
  const Eigen::MatrixXd a = x.transpose() * x + penalty;
  return a.ldlt().solve(x.transpose() * y);
}

/// Autocovariances gamma(0..max_lag) of a causal ARMA process,
/// eta_t = sum_j ar_j eta_{t-j} + eps_t + sum_l ma_l eps_{t-l}, from the
/// MA(infinity) weights psi (summed until they are negligible).
inline std::vector<double> arma_autocovariance(const std::vector<double>& ar, const std::vector<double>& ma,
                                               double sigma2, int max_lag) {
  std::vector<double> psi = {1.0};
  double tail = 1.0;
  for (int j = 1; j < 200000 && (tail > 1e-20 || j < max_lag + 50); ++j) {
    double v = j <= static_cast<int>(ma.size()) ? ma[j - 1] : 0.0;
    for (int i = 1; i <= static_cast<int>(ar.size()) && i <= j; ++i) v += ar[i - 1] * psi[j - i];
    psi.push_back(v);
    tail = 0.0;
    for (int k = std::max(0, j - 20); k <= j; ++k) tail = std::max(tail, std::abs(psi[k]));
  }
  std::vector<double> gamma(max_lag + 1, 0.0);
  for (int h = 0; h <= max_lag; ++h) {
    long double s = 0.0;
    for (std::size_t j = 0; j + h < psi.size(); ++j) s += static_cast<long double>(psi[j]) * psi[j + h];
    gamma[h] = static_cast<double>(sigma2 * s);
  }
  return gamma;
}

/// Gaussian log-density of the observed entries (non-NaN) of `series` under
/// the stationary ARMA covariance: the dense n x n matrix with the rows and
/// columns of missing entries deleted.
inline double arma_dense_loglik(const std::vector<double>& series, const std::vector<double>& ar,
                                const std::vector<double>& ma, double sigma2) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(series.size()); ++i)
    if (!std::isnan(series[i])) idx.push_back(i);
  const int n = static_cast<int>(idx.size());
  const auto gamma = arma_autocovariance(ar, ma, sigma2, static_cast<int>(series.size()));
  Eigen::MatrixXd cov(n, n);
  Eigen::VectorXd y(n);
  for (int a = 0; a < n; ++a) {
    y[a] = series[idx[a]];
    for (int b = 0; b < n; ++b) cov(a, b) = gamma[std::abs(idx[a] - idx[b])];
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd z = llt.matrixL().solve(y);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
}

/// VIF_j = 1 / (1 - R_j^2) where R_j^2 comes from the normal equations of
/// column j on the other columns plus an intercept.
inline std::vector<double> vif(const std::vector<std::vector<double>>& columns) {
  const int k = static_cast<int>(columns.size());
  const int n = static_cast<int>(columns[0].size());
  std::vector<double> out;
  for (int j = 0; j < k; ++j) {
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      int c = 1;
      for (int m = 0; m < k; ++m)
        if (m != j) x(i, c++) = columns[m][i];
      y[i] = columns[j][i];
    }
    const Eigen::VectorXd b = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    const double rss = (y - x * b).squaredNorm();
    const double tss = (y.array() - y.mean()).matrix().squaredNorm();
    out.push_back(1.0 / (rss / tss));
  }
  return out;
}

/// Composite Simpson rule with `intervals` (even) sub-intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int intervals = 2000) {
  const double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Central second difference.
inline double second_derivative(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

}  // namespace oracle

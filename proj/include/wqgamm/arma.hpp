#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wqgamm {

/// How missing observations (NaN markers) enter the likelihood.
enum class GapMode {
  kalman,        ///< prediction steps without updates across gaps
  segmented,     ///< independent stationary segments between gaps
  concatenated,  ///< markers removed, observations treated as contiguous
};

GapMode parse_gap_mode(const std::string& text);
std::string to_string(GapMode mode);

/// eta_t = eps_t + sum_j ar_j eta_{t-j} + sum_l ma_l eps_{t-l}, eps ~ N(0, sigma2).
struct ArmaParams {
  std::vector<double> ar;
  std::vector<double> ma;
  double sigma2 = 1.0;
};

/// Exact Gaussian log-likelihood via the Harvey state-space form
/// (state dimension max(p, q + 1)). NaN entries are missing observations.
/// Throws DomainError for non-stationary AR or non-invertible MA parameters.
double arma_loglik(std::span<const double> series, const ArmaParams& params,
                   GapMode mode = GapMode::kalman);

/// Partial-autocorrelation reparameterization. Maps unconstrained reals to
/// coefficients of a polynomial 1 - sum c_j z^j with all roots outside the
/// unit circle, and back.
namespace pacf {
std::vector<double> to_coefficients(std::span<const double> unconstrained);
/// Throws DomainError when the polynomial is not strictly stable.
std::vector<double> from_coefficients(std::span<const double> coefficients);
bool is_stable(std::span<const double> coefficients);
/// Smallest modulus among the roots of 1 - sum c_j z^j; +inf for an empty list.
double min_root_modulus(std::span<const double> coefficients);
}  // namespace pacf

struct ArmaFitOptions {
  GapMode gap_mode = GapMode::kalman;
  int max_iterations = 200;
  int max_restarts = 5;
  std::uint64_t seed = 20210129;
  /// select_order excludes fits whose AR or MA polynomial has a root with
  /// modulus below this bound; 0 disables the check.
  double min_root_modulus = 1.01;
};

struct ArmaFit {
  int p = 0;
  int q = 0;
  std::vector<double> ar;
  std::vector<double> ma;
  double sigma2 = 0.0;
  double loglik = 0.0;
  double aic = 0.0;  ///< -2 loglik + 2 (p + q + 1)
  std::size_t n_eff = 0;
  std::vector<double> innovations;  ///< standardized one-step-ahead errors
  bool converged = true;
  int iterations = 0;
  int restarts = 0;
};

/// Maximum likelihood ARMA(p, q) with sigma2 concentrated out: quasi-Newton on
/// the PACF-transformed parameters from Hannan-Rissanen starting values.
ArmaFit fit_arma(std::span<const double> series, int p, int q, const ArmaFitOptions& options = {});

/// Likelihood pieces at fixed parameters with sigma2 concentrated out.
ArmaFit evaluate_arma(std::span<const double> series, const std::vector<double>& ar,
                      const std::vector<double>& ma, GapMode mode = GapMode::kalman);

struct OrderCell {
  int p = 0;
  int q = 0;
  bool ok = false;
  double aic = 0.0;
  bool converged = false;
  double root_modulus = 0.0;  ///< smallest AR or MA root modulus (inf when p = q = 0)
  std::string error;
};

struct OrderSelection {
  ArmaFit best;
  std::vector<OrderCell> cells;  ///< row-major over (p, q)
};

/// Fits every (p, q) in [0, p_max] x [0, q_max] and keeps the minimum AIC;
/// ties go to the smaller p + q, then the smaller p. Cells with a root inside
/// options.min_root_modulus are reported but not eligible.
OrderSelection select_order(std::span<const double> series, int p_max = 5, int q_max = 5,
                            const ArmaFitOptions& options = {});

}  // namespace wqgamm

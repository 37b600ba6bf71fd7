#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wqgamm/basis.hpp"
#include "wqgamm/ingest.hpp"

namespace wqgamm {

/// Approximate AIC: n log(sigma2_hat) + 2k. Throws DomainError when
/// sigma2_hat <= 0.
double aaic(std::size_t n, double sigma2_hat, double k);

struct TermFit {
  BasisExpansion basis;
  Eigen::VectorXd coefs;
  double lambda = 0.0;
  double edf = 0.0;
};

/// Outcome of the smoothing-parameter search.
struct LambdaSearch {
  bool converged = true;
  int sweeps = 0;
  std::size_t evaluations = 0;
  double gcv = 0.0;
  /// Smallest GCV among every probed point; the selected GCV never exceeds it.
  double best_probed_gcv = 0.0;
};

/// Gaussian identity-link additive model y = b0 + sum_k s_k(z_k) + e.
struct GamFit {
  std::string response;
  double intercept = 0.0;
  std::vector<TermFit> terms;
  std::size_t n = 0;
  double rss = 0.0;
  double tss = 0.0;
  double deviance_explained = 0.0;
  double total_edf = 1.0;
  double sigma2_hat = 0.0;  ///< rss / n
  double aic = 0.0;         ///< aaic(n, sigma2_hat, total_edf)
  double gcv = 0.0;
  /// sigma2_hat * (X'X + S_lambda)^-1, intercept first then term blocks.
  Eigen::MatrixXd coef_covariance;
  Eigen::VectorXd residuals;      ///< valid rows in time order
  std::vector<std::size_t> rows;  ///< frame row of each residual
  LambdaSearch search;

  std::vector<std::string> term_names() const;
  std::vector<double> lambdas() const;
  /// Index into `terms`, or -1.
  int term_index(std::string_view covariate) const;
  /// Offset of a term's block in coef_covariance.
  Eigen::Index term_offset(int index) const;
};

/// Response and candidate bases on the valid rows of a frame, shared by every
/// model fitted during selection.
struct GamData {
  std::string response;
  Eigen::VectorXd y;
  std::vector<std::size_t> rows;
  std::vector<BasisExpansion> bases;

  static GamData from_frame(const AlignedFrame& frame, std::span<const SmoothSpec> specs);
  /// Index of a basis by covariate name, or -1.
  int find(std::string_view covariate) const;
};

/// Penalized least squares for fixed smoothing parameters (one per term).
GamFit fit_penalized(const GamData& data, std::span<const std::size_t> terms,
                     std::span<const double> lambdas);
GamFit fit_penalized(const AlignedFrame& frame, std::span<const SmoothSpec> terms,
                     std::span<const double> lambdas);

struct GcvOptions {
  double log_lambda_min = -12.0;
  double log_lambda_max = 12.0;
  int grid_points = 21;
  int max_sweeps = 50;
  double relative_tolerance = 1e-7;
};

/// Minimizes GCV(lambda) = n RSS / (n - edf)^2 by coordinate descent on
/// log lambda: a grid scan per coordinate followed by golden-section
/// refinement. Terms are visited in covariate-name order, so the result does
/// not depend on the order they are supplied in.
GamFit select_lambdas(const GamData& data, std::span<const std::size_t> terms,
                      const GcvOptions& options = {});
GamFit select_lambdas(const AlignedFrame& frame, std::span<const SmoothSpec> terms,
                      const GcvOptions& options = {});

struct StepwiseStep {
  std::string action;  ///< "start", "add" or "drop"
  std::string term;
  double aic = 0.0;
  std::vector<std::string> model;
};

struct StepwiseResult {
  GamFit fit;
  std::vector<StepwiseStep> trace;
  std::size_t models_evaluated = 0;
};

/// Forward selection by AIC from the intercept-only model with a backward
/// pass after each addition. Smoothing parameters are re-selected for every
/// model visited; ties go to the candidate whose name sorts first.
StepwiseResult stepwise_select(const GamData& data, const GcvOptions& options = {});
StepwiseResult stepwise_select(const AlignedFrame& frame, std::span<const SmoothSpec> candidates,
                               const GcvOptions& options = {});

struct SmoothBand {
  std::string covariate;
  std::vector<double> x;
  std::vector<double> estimate;
  std::vector<double> se;
};

/// Term estimate and pointwise standard error from the penalized coefficient
/// covariance, on x_grid.
SmoothBand smooth_se(const GamFit& fit, std::string_view covariate, std::span<const double> x_grid,
                     bool extrapolate = false);

/// `points` equally spaced values over the observed range of a term.
std::vector<double> term_grid(const GamFit& fit, std::string_view covariate, int points = 200);

}  // namespace wqgamm

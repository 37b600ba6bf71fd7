#pragma once

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wqgamm {

/// Smooth term request. With the sum-to-zero constraint a basis of dimension
/// k carries at most k - 1 effective degrees of freedom.
struct SmoothSpec {
  std::string covariate;
  int basis_dim = 7;

  int max_edf() const noexcept { return basis_dim - 1; }
};

/// Constrained univariate thin-plate regression spline basis.
///
/// The unconstrained smooth is
///   f(x) = sum_j d_j |u - u_j|^3 / 12 + a0 + a1 u,   u = (x - shift) / scale
/// with the radial coefficients restricted to the span of the top-k
/// eigenvectors of the kernel matrix and to the polynomial side conditions.
/// The constant is then absorbed by centering, leaving k - 1 columns whose last
/// column is the (unpenalized) linear trend.
struct BasisExpansion {
  std::string covariate;
  Eigen::MatrixXd design;   ///< n x (k-1), columns sum to zero
  Eigen::MatrixXd penalty;  ///< (k-1) x (k-1), symmetric PSD
  int null_dim = 1;
  Eigen::RowVectorXd centering;  ///< means removed from the raw columns
  Eigen::VectorXd knots;         ///< representative covariate values
  double shift = 0.0;
  double scale = 1.0;
  Eigen::MatrixXd radial_map;  ///< knots x (k-2): kernel row -> radial columns
  /// penalty(b) = penalty_scale * integral of f''(x)^2 dx in covariate units.
  double penalty_scale = 1.0;
  double x_min = 0.0;
  double x_max = 0.0;

  int columns() const noexcept { return static_cast<int>(centering.size()); }
  int basis_dim() const noexcept { return columns() + 1; }

  /// Constrained design rows for arbitrary x (no range check).
  Eigen::MatrixXd rows(std::span<const double> x) const;
};

/// Builds the basis on covariate values x (finite, >= k distinct values).
/// At most `max_knots` representative values are used, quantile-subsampled
/// from the distinct values (always keeping the extremes).
BasisExpansion tprs_basis(std::span<const double> x, const SmoothSpec& spec,
                          int max_knots = 1000);

/// s(x_new) for the given constrained coefficients. Outside the knot range the
/// smooth is linear; evaluating there requires `extrapolate`.
Eigen::VectorXd evaluate_smooth(const BasisExpansion& basis, const Eigen::VectorXd& coefs,
                                std::span<const double> x_new, bool extrapolate = false);

/// Largest-magnitude eigenpairs of a symmetric matrix (Lanczos with full
/// reorthogonalization; dense solve for small matrices). Eigenvalues are
/// returned in decreasing magnitude.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> top_magnitude_eigenpairs(const Eigen::MatrixXd& a,
                                                                     int k);

// ---------------------------------------------------------------------------
// collinearity

inline constexpr double kInfiniteVif = std::numeric_limits<double>::infinity();

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

struct VifEntry {
  std::string name;
  double vif = 1.0;  ///< kInfiniteVif when 1 - R^2 < 1e-12
};

/// VIF_j = 1 / (1 - R_j^2), R_j^2 from regressing column j on the others plus
/// an intercept. Throws DegenerateColumnError for a constant column.
std::vector<VifEntry> vif(std::span<const NamedColumn> columns);

struct VifScreenEntry {
  std::string name;
  double initial_vif = 1.0;
  double final_vif = 1.0;  ///< VIF when removed, or in the surviving set
  bool excluded = false;
  int removal_order = 0;  ///< 1-based; 0 for survivors
};

/// Repeatedly drops the column with the largest VIF >= threshold until every
/// remaining VIF is below it or one column remains. Ties drop the later column.
std::vector<VifScreenEntry> vif_screen(std::span<const NamedColumn> columns, double threshold = 6.0);

}  // namespace wqgamm

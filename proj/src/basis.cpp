#include "wqgamm/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "wqgamm/errors.hpp"

namespace wqgamm {

namespace {

constexpr int kDenseEigenLimit = 200;

inline double tps_kernel(double r) {
  r = std::abs(r);
  return r * r * r / 12.0;
}

// Flip each column so its largest-magnitude entry is positive.
void normalize_signs(Eigen::MatrixXd& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index arg = 0;
    v.col(c).cwiseAbs().maxCoeff(&arg);
    if (v(arg, c) < 0) v.col(c) *= -1.0;
  }
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_top(const Eigen::MatrixXd& a, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd& ev = es.eigenvalues();
  std::vector<int> order(ev.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return std::abs(ev[i]) > std::abs(ev[j]); });
  Eigen::VectorXd values(k);
  Eigen::MatrixXd vectors(a.rows(), k);
  for (int i = 0; i < k; ++i) {
    values[i] = ev[order[i]];
    vectors.col(i) = es.eigenvectors().col(order[i]);
  }
  return {values, vectors};
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::MatrixXd> top_magnitude_eigenpairs(const Eigen::MatrixXd& a,
                                                                     int k) {
  const int m = static_cast<int>(a.rows());
  if (k <= 0 || k > m) throw PreconditionError(Stage::basis, "eigenpair count out of range");
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> out;
  if (m <= kDenseEigenLimit || 4 * k >= m) {
    out = dense_top(a, k);
    normalize_signs(out.second);
    return out;
  }

  // Lanczos with full reorthogonalization.
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd q(m, m);
  Eigen::VectorXd alpha(m), beta(m);
  Eigen::VectorXd start(m);
  for (int i = 0; i < m; ++i) start[i] = normal(rng);
  q.col(0) = start.normalized();
  const double anorm = a.cwiseAbs().rowwise().sum().maxCoeff();

  int built = 0;  // number of Lanczos vectors with alpha computed
  int steps = std::min(m, std::max(4 * k, 48));
  while (true) {
    for (int j = built; j < steps; ++j) {
      Eigen::VectorXd w = a * q.col(j);
      alpha[j] = q.col(j).dot(w);
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd proj = q.leftCols(j + 1).transpose() * w;
        w.noalias() -= q.leftCols(j + 1) * proj;
      }
      beta[j] = w.norm();
      if (j + 1 < m) {
        if (beta[j] <= 1e-13 * anorm) {
          // Invariant subspace found before the top-k converged; fall back.
          out = dense_top(a, k);
          normalize_signs(out.second);
          return out;
        }
        q.col(j + 1) = w / beta[j];
      }
    }
    built = steps;

    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
    for (int j = 0; j < steps; ++j) {
      t(j, j) = alpha[j];
      if (j + 1 < steps) t(j, j + 1) = t(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    std::vector<int> order(steps);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
      return std::abs(es.eigenvalues()[i]) > std::abs(es.eigenvalues()[j]);
    });
    const double top = std::abs(es.eigenvalues()[order[0]]);
    bool converged = steps == m;
    if (!converged) {
      converged = true;
      for (int i = 0; i < k; ++i) {
        const double resid = std::abs(beta[steps - 1] * es.eigenvectors()(steps - 1, order[i]));
        if (resid > 1e-11 * top) converged = false;
      }
    }
    if (converged) {
      out.first.resize(k);
      out.second.resize(m, k);
      for (int i = 0; i < k; ++i) {
        out.first[i] = es.eigenvalues()[order[i]];
        out.second.col(i) = (q.leftCols(steps) * es.eigenvectors().col(order[i])).normalized();
      }
      normalize_signs(out.second);
      return out;
    }
    steps = std::min(m, steps + 24);
  }
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd BasisExpansion::rows(std::span<const double> x) const {
  const int radial = static_cast<int>(radial_map.cols());
  const Eigen::Index m = knots.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), radial + 1);
  // Fixed loop order keeps results bit-identical regardless of batch size.
  Eigen::VectorXd u_knots = (knots.array() - shift) / scale;
  std::vector<double> acc(radial);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = (x[i] - shift) / scale;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double kv = tps_kernel(u - u_knots[j]);
      for (int c = 0; c < radial; ++c) acc[c] += kv * radial_map(j, c);
    }
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < radial; ++c) out(r, c) = acc[c] - centering[c];
    out(r, radial) = u - centering[radial];
  }
  return out;
}

BasisExpansion tprs_basis(std::span<const double> x, const SmoothSpec& spec, int max_knots) {
  const int k = spec.basis_dim;
  if (k < 3) throw PreconditionError(Stage::basis, "basis_dim must be >= 3 for '" + spec.covariate + "'");
  for (double v : x)
    if (!std::isfinite(v))
      throw DataError(Stage::basis, "non-finite value in covariate '" + spec.covariate + "'");

  std::vector<double> distinct(x.begin(), x.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < k)
    throw RankError(Stage::basis, "covariate '" + spec.covariate + "' has " +
                                      std::to_string(distinct.size()) +
                                      " distinct values, fewer than basis_dim " +
                                      std::to_string(k) + "; use a smaller basis_dim");

  BasisExpansion b;
  b.covariate = spec.covariate;
  b.null_dim = 1;
  b.x_min = distinct.front();
  b.x_max = distinct.back();

  const auto n_distinct = static_cast<std::ptrdiff_t>(distinct.size());
  const int m = static_cast<int>(std::min<std::ptrdiff_t>(n_distinct, std::max(max_knots, k)));
  b.knots.resize(m);
  for (int i = 0; i < m; ++i) {
    const std::ptrdiff_t idx =
        m == n_distinct ? i
                        : static_cast<std::ptrdiff_t>(std::llround(
                              static_cast<double>(i) * static_cast<double>(n_distinct - 1) /
                              static_cast<double>(m - 1)));
    b.knots[i] = distinct[idx];
  }

  const double n = static_cast<double>(x.size());
  b.shift = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - b.shift) * (v - b.shift);
  b.scale = std::sqrt(ss / (n - 1.0));

  const Eigen::VectorXd u = (b.knots.array() - b.shift) / b.scale;
  Eigen::MatrixXd kernel(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) kernel(i, j) = kernel(j, i) = tps_kernel(u[i] - u[j]);

  const auto [eigvals, eigvecs] = top_magnitude_eigenpairs(kernel, k);

  Eigen::MatrixXd poly(m, 2);
  poly.col(0).setOnes();
  poly.col(1) = u;
  const Eigen::MatrixXd side = eigvecs.transpose() * poly;  // k x 2
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(side);
  const Eigen::MatrixXd qfull = qr.householderQ();
  const Eigen::MatrixXd z = qfull.rightCols(k - 2);

  b.radial_map = eigvecs * z;
  Eigen::MatrixXd s_raw = z.transpose() * eigvals.asDiagonal() * z;
  s_raw = 0.5 * (s_raw + s_raw.transpose()).eval();

  b.centering = Eigen::RowVectorXd::Zero(k - 1);
  b.design = b.rows(x);
  b.centering = b.design.colwise().mean();
  b.design.rowwise() -= b.centering;

  b.penalty = Eigen::MatrixXd::Zero(k - 1, k - 1);
  b.penalty.topLeftCorner(k - 2, k - 2) = s_raw;
  const double xtx_norm = (b.design.transpose() * b.design).norm();
  const double s_norm = b.penalty.norm();
  const double c = s_norm > 0 ? xtx_norm / s_norm : 1.0;
  b.penalty *= c;
  b.penalty_scale = c * b.scale * b.scale * b.scale;
  return b;
}

Eigen::VectorXd evaluate_smooth(const BasisExpansion& basis, const Eigen::VectorXd& coefs,
                                std::span<const double> x_new, bool extrapolate) {
  if (coefs.size() != basis.columns())
    throw PreconditionError(Stage::basis, "coefficient count does not match basis of '" +
                                              basis.covariate + "'");
  if (!extrapolate) {
    for (double v : x_new)
      if (!(v >= basis.x_min && v <= basis.x_max))
        throw ExtrapolationError(Stage::basis, "value " + std::to_string(v) +
                                                   " outside the observed range of '" +
                                                   basis.covariate + "'");
  }
  return basis.rows(x_new) * coefs;
}

// ---------------------------------------------------------------------------
// VIF

namespace {

double one_minus_r2(const Eigen::VectorXd& y, const Eigen::MatrixXd& others) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd design(n, others.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(others.cols()) = others;
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(y);
  const double rss = (y - design * beta).squaredNorm();
  const double tss = (y.array() - y.mean()).matrix().squaredNorm();
  return rss / tss;
}

void check_columns(std::span<const NamedColumn> columns) {
  if (columns.size() < 2) throw PreconditionError(Stage::basis, "VIF needs at least two columns");
  const std::size_t n = columns.front().values.size();
  for (const auto& c : columns) {
    if (c.values.size() != n)
      throw PreconditionError(Stage::basis, "VIF columns differ in length");
    const auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
    if (c.values.empty() || *lo == *hi)
      throw DegenerateColumnError(Stage::basis, "column '" + c.name + "' is constant");
  }
}

}  // namespace

std::vector<VifEntry> vif(std::span<const NamedColumn> columns) {
  check_columns(columns);
  const auto n = static_cast<Eigen::Index>(columns.front().values.size());
  const auto p = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd all(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    all.col(j) = Eigen::Map<const Eigen::VectorXd>(columns[j].values.data(), n);

  std::vector<VifEntry> out;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd others(n, p - 1);
    for (Eigen::Index c = 0, o = 0; c < p; ++c)
      if (c != j) others.col(o++) = all.col(c);
    const double tol = one_minus_r2(all.col(j), others);
    out.push_back({columns[j].name, tol < 1e-12 ? kInfiniteVif : 1.0 / tol});
  }
  return out;
}

std::vector<VifScreenEntry> vif_screen(std::span<const NamedColumn> columns, double threshold) {
  std::vector<VifScreenEntry> table;
  const auto initial = vif(columns);
  for (const auto& e : initial) table.push_back({e.name, e.vif, e.vif, false, 0});

  std::vector<NamedColumn> remaining(columns.begin(), columns.end());
  int removed = 0;
  while (remaining.size() > 1) {
    const auto current = vif(remaining);
    std::size_t worst = 0;
    for (std::size_t i = 1; i < current.size(); ++i)
      if (current[i].vif >= current[worst].vif) worst = i;
    for (const auto& e : current)
      for (auto& t : table)
        if (t.name == e.name) t.final_vif = e.vif;
    if (current[worst].vif < threshold) break;
    for (auto& t : table)
      if (t.name == current[worst].name) {
        t.excluded = true;
        t.removal_order = ++removed;
      }
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return table;
}

}  // namespace wqgamm

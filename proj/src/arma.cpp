#include "wqgamm/arma.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "wqgamm/errors.hpp"
#include "wqgamm/parallel.hpp"

namespace wqgamm {

GapMode parse_gap_mode(const std::string& text) {
  if (text == "kalman") return GapMode::kalman;
  if (text == "segmented") return GapMode::segmented;
  if (text == "concatenated") return GapMode::concatenated;
  throw PreconditionError(Stage::arma, "unknown gap mode '" + text + "'");
}

std::string to_string(GapMode mode) {
  switch (mode) {
    case GapMode::kalman: return "kalman";
    case GapMode::segmented: return "segmented";
    case GapMode::concatenated: return "concatenated";
  }
  return "kalman";
}

// ---------------------------------------------------------------------------
// PACF transform

namespace pacf {

std::vector<double> to_coefficients(std::span<const double> unconstrained) {
  const std::size_t p = unconstrained.size();
  std::vector<double> phi(p, 0.0), prev(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    const double r = std::tanh(unconstrained[k]);
    prev = phi;
    phi[k] = r;
    for (std::size_t j = 0; j < k; ++j) phi[j] = prev[j] - r * prev[k - 1 - j];
  }
  return phi;
}

namespace {
// Reverse Durbin-Levinson; returns the partial autocorrelations or nothing.
bool reverse_levinson(std::span<const double> coefficients, std::vector<double>& partial) {
  const std::size_t p = coefficients.size();
  std::vector<double> phi(coefficients.begin(), coefficients.end());
  partial.assign(p, 0.0);
  for (std::size_t k = p; k-- > 0;) {
    const double r = phi[k];
    if (!std::isfinite(r) || std::abs(r) >= 1.0) return false;
    partial[k] = r;
    const double denom = 1.0 - r * r;
    std::vector<double> next(k);
    for (std::size_t j = 0; j < k; ++j) next[j] = (phi[j] + r * phi[k - 1 - j]) / denom;
    std::copy(next.begin(), next.end(), phi.begin());
  }
  return true;
}
}  // namespace

bool is_stable(std::span<const double> coefficients) {
  std::vector<double> partial;
  return reverse_levinson(coefficients, partial);
}

double min_root_modulus(std::span<const double> coefficients) {
  const auto p = static_cast<Eigen::Index>(coefficients.size());
  if (p == 0) return std::numeric_limits<double>::infinity();
  // Eigenvalues of the companion matrix are the reciprocal roots.
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) companion(0, j) = coefficients[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  const Eigen::VectorXcd eig = companion.eigenvalues();
  const double largest = eig.cwiseAbs().maxCoeff();
  return largest > 0.0 ? 1.0 / largest : std::numeric_limits<double>::infinity();
}

std::vector<double> from_coefficients(std::span<const double> coefficients) {
  std::vector<double> partial;
  if (!reverse_levinson(coefficients, partial))
    throw DomainError(Stage::arma, "polynomial has a root on or inside the unit circle");
  for (double& r : partial) r = std::atanh(r);
  return partial;
}

}  // namespace pacf

// ---------------------------------------------------------------------------
// Kalman filter

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kInf = std::numeric_limits<double>::infinity();

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 16, 16>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;

struct FilterSums {
  double sum_log_f = 0.0;
  double sum_v2_f = 0.0;
  std::size_t n_obs = 0;
  std::vector<double> v_over_sqrt_f;  // filled on request
};

class StateSpace {
 public:
  StateSpace(const std::vector<double>& ar, const std::vector<double>& ma) {
    const int p = static_cast<int>(ar.size());
    const int q = static_cast<int>(ma.size());
    r_ = std::max(p, q + 1);
    if (r_ > 16) throw PreconditionError(Stage::arma, "ARMA order too large");
    phi_ = SmallVector::Zero(r_);
    for (int i = 0; i < p; ++i) phi_[i] = ar[i];
    rvec_ = SmallVector::Zero(r_);
    rvec_[0] = 1.0;
    for (int i = 0; i < q; ++i) rvec_[i + 1] = ma[i];
    rrt_ = rvec_ * rvec_.transpose();
    stationary_covariance();
  }

  int dim() const { return r_; }
  const SmallMatrix& p0() const { return p0_; }

  // T x for the companion transition.
  void transition(SmallVector& a) const {
    const double a0 = a[0];
    for (int i = 0; i + 1 < r_; ++i) a[i] = phi_[i] * a0 + a[i + 1];
    a[r_ - 1] = phi_[r_ - 1] * a0;
  }

  // T P T' + R R'
  SmallMatrix propagate(const SmallMatrix& p) const {
    SmallMatrix tp(r_, r_);
    for (int j = 0; j < r_; ++j) {
      for (int i = 0; i + 1 < r_; ++i) tp(i, j) = phi_[i] * p(0, j) + p(i + 1, j);
      tp(r_ - 1, j) = phi_[r_ - 1] * p(0, j);
    }
    SmallMatrix out(r_, r_);
    for (int i = 0; i < r_; ++i) {
      for (int j = 0; j + 1 < r_; ++j) out(i, j) = tp(i, 0) * phi_[j] + tp(i, j + 1);
      out(i, r_ - 1) = tp(i, 0) * phi_[r_ - 1];
    }
    out += rrt_;
    return out;
  }

 private:
  void stationary_covariance() {
    // (I - T (x) T) vec(P) = vec(R R')
    SmallMatrix t = SmallMatrix::Zero(r_, r_);
    t.col(0) = phi_;
    for (int i = 0; i + 1 < r_; ++i) t(i, i + 1) = 1.0;
    const int r2 = r_ * r_;
    Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(r2, r2);
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < r_; ++j)
        if (t(i, j) != 0.0)
          for (int k = 0; k < r_; ++k)
            for (int l = 0; l < r_; ++l) sys(i * r_ + k, j * r_ + l) -= t(i, j) * t(k, l);
    Eigen::VectorXd rhs(r2);
    for (int i = 0; i < r_; ++i)
      for (int k = 0; k < r_; ++k) rhs[i * r_ + k] = rrt_(i, k);
    const Eigen::VectorXd sol = sys.partialPivLu().solve(rhs);
    p0_.resize(r_, r_);
    for (int i = 0; i < r_; ++i)
      for (int k = 0; k < r_; ++k) p0_(i, k) = sol[i * r_ + k];
    p0_ = 0.5 * (p0_ + p0_.transpose()).eval();
  }

  int r_ = 1;
  SmallVector phi_;
  SmallVector rvec_;
  SmallMatrix rrt_;
  SmallMatrix p0_;
};

FilterSums run_filter(std::span<const double> y, const std::vector<double>& ar,
                      const std::vector<double>& ma, GapMode mode, bool keep_innovations) {
  const StateSpace ss(ar, ma);
  const int r = ss.dim();
  FilterSums out;
  SmallVector a = SmallVector::Zero(r);
  SmallMatrix p = ss.p0();
  bool steady = false;
  bool after_gap = false;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double obs = y[t];
    if (std::isnan(obs)) {
      if (mode == GapMode::concatenated) continue;
      if (mode == GapMode::segmented) {
        after_gap = true;
        continue;
      }
      ss.transition(a);
      p = ss.propagate(p);
      steady = false;
      continue;
    }
    if (after_gap) {
      a.setZero();
      p = ss.p0();
      steady = false;
      after_gap = false;
    }
    const double f = p(0, 0);
    if (!(f > 0.0)) throw DomainError(Stage::arma, "non-positive innovation variance in filter");
    const double v = obs - a[0];
    out.sum_log_f += std::log(f);
    out.sum_v2_f += v * v / f;
    ++out.n_obs;
    if (keep_innovations) out.v_over_sqrt_f.push_back(v / std::sqrt(f));

    const SmallVector k = p.col(0) / f;
    a += k * v;
    ss.transition(a);
    if (!steady) {
      SmallMatrix updated = p - k * p.row(0);
      SmallMatrix next = ss.propagate(updated);
      const double change = (next - p).cwiseAbs().maxCoeff();
      const double size = std::max(1.0, next.cwiseAbs().maxCoeff());
      if (change <= 1e-14 * size) steady = true;
      p = next;
    }
  }
  return out;
}

void check_params(const std::vector<double>& ar, const std::vector<double>& ma) {
  if (!pacf::is_stable(ar)) throw DomainError(Stage::arma, "AR parameters are not stationary");
  std::vector<double> neg(ma.size());
  for (std::size_t i = 0; i < ma.size(); ++i) neg[i] = -ma[i];
  if (!pacf::is_stable(neg)) throw DomainError(Stage::arma, "MA parameters are not invertible");
}

std::size_t count_observed(std::span<const double> y) {
  return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return !std::isnan(v); }));
}

// Concentrated log-likelihood for given coefficients.
double concentrated_loglik(const FilterSums& s) {
  const double n = static_cast<double>(s.n_obs);
  const double sigma2 = s.sum_v2_f / n;
  if (!(sigma2 > 0.0)) return -kInf;
  return -0.5 * (n * (kLog2Pi + std::log(sigma2) + 1.0) + s.sum_log_f);
}

}  // namespace

double arma_loglik(std::span<const double> series, const ArmaParams& params, GapMode mode) {
  check_params(params.ar, params.ma);
  if (!(params.sigma2 > 0.0)) throw DomainError(Stage::arma, "sigma2 must be positive");
  const std::size_t n_obs = count_observed(series);
  if (n_obs <= params.ar.size() + params.ma.size() + 1)
    throw PreconditionError(Stage::arma, "series too short for the requested order");
  const FilterSums s = run_filter(series, params.ar, params.ma, mode, false);
  const double n = static_cast<double>(s.n_obs);
  return -0.5 * (n * (kLog2Pi + std::log(params.sigma2)) + s.sum_log_f + s.sum_v2_f / params.sigma2);
}

ArmaFit evaluate_arma(std::span<const double> series, const std::vector<double>& ar,
                      const std::vector<double>& ma, GapMode mode) {
  check_params(ar, ma);
  const FilterSums s = run_filter(series, ar, ma, mode, true);
  ArmaFit fit;
  fit.p = static_cast<int>(ar.size());
  fit.q = static_cast<int>(ma.size());
  fit.ar = ar;
  fit.ma = ma;
  fit.n_eff = s.n_obs;
  fit.sigma2 = s.sum_v2_f / static_cast<double>(s.n_obs);
  fit.loglik = concentrated_loglik(s);
  fit.aic = -2.0 * fit.loglik + 2.0 * (fit.p + fit.q + 1);
  const double sd = std::sqrt(fit.sigma2);
  fit.innovations.reserve(s.v_over_sqrt_f.size());
  for (double v : s.v_over_sqrt_f) fit.innovations.push_back(v / sd);
  return fit;
}

// ---------------------------------------------------------------------------
// estimation

namespace {

struct Unpacked {
  std::vector<double> ar;
  std::vector<double> ma;
};

Unpacked unpack(const Eigen::VectorXd& theta, int p, int q) {
  Unpacked u;
  std::vector<double> a(theta.data(), theta.data() + p);
  std::vector<double> m(theta.data() + p, theta.data() + p + q);
  u.ar = pacf::to_coefficients(a);
  u.ma = pacf::to_coefficients(m);
  for (double& v : u.ma) v = -v;
  return u;
}

// Least squares on rows where every regressor and the target are finite.
Eigen::VectorXd masked_ols(const std::vector<std::vector<double>>& regressors,
                           std::span<const double> target, std::size_t start) {
  const std::size_t k = regressors.size();
  std::vector<std::size_t> rows;
  for (std::size_t t = start; t < target.size(); ++t) {
    bool ok = std::isfinite(target[t]);
    for (std::size_t j = 0; ok && j < k; ++j) ok = std::isfinite(regressors[j][t]);
    if (ok) rows.push_back(t);
  }
  if (rows.size() < 2 * k + 2) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = target[rows[i]];
    for (std::size_t j = 0; j < k; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = regressors[j][rows[i]];
  }
  return x.colPivHouseholderQr().solve(y);
}

std::vector<double> lagged(std::span<const double> y, std::size_t lag) {
  std::vector<double> out(y.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = lag; t < y.size(); ++t) out[t] = y[t - lag];
  return out;
}

// Hannan-Rissanen starting values mapped to the unconstrained space.
Eigen::VectorXd hannan_rissanen(std::span<const double> y, int p, int q) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + q);
  if (p + q == 0) return theta;
  const std::size_t n = y.size();
  std::vector<double> resid;
  if (q > 0) {
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(std::max(p, q) + 10),
                                                std::max<std::size_t>(n / 10, 1));
    std::vector<std::vector<double>> regs;
    for (std::size_t j = 1; j <= m; ++j) regs.push_back(lagged(y, j));
    const Eigen::VectorXd a = masked_ols(regs, y, m);
    resid.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = m; t < n; ++t) {
      double e = y[t];
      for (std::size_t j = 0; j < m; ++j) e -= a[static_cast<Eigen::Index>(j)] * regs[j][t];
      resid[t] = e;
    }
  }
  std::vector<std::vector<double>> regs;
  for (int j = 1; j <= p; ++j) regs.push_back(lagged(y, static_cast<std::size_t>(j)));
  for (int j = 1; j <= q; ++j) regs.push_back(lagged(resid, static_cast<std::size_t>(j)));
  const Eigen::VectorXd coef = masked_ols(regs, y, static_cast<std::size_t>(std::max(p, q)));

  std::vector<double> ar(coef.data(), coef.data() + p);
  std::vector<double> neg_ma(q);
  for (int j = 0; j < q; ++j) neg_ma[j] = -coef[p + j];
  for (int shrink = 0; shrink < 60 && !(pacf::is_stable(ar) && pacf::is_stable(neg_ma)); ++shrink) {
    for (double& v : ar) v *= 0.9;
    for (double& v : neg_ma) v *= 0.9;
  }
  if (!pacf::is_stable(ar)) std::fill(ar.begin(), ar.end(), 0.0);
  if (!pacf::is_stable(neg_ma)) std::fill(neg_ma.begin(), neg_ma.end(), 0.0);
  auto to_theta = [](const std::vector<double>& c) {
    auto r = pacf::from_coefficients(c);  // atanh of partials
    for (double& v : r) v = std::clamp(v, -2.5, 2.5);
    return r;
  };
  const auto ta = to_theta(ar);
  const auto tm = to_theta(neg_ma);
  for (int j = 0; j < p; ++j) theta[j] = ta[j];
  for (int j = 0; j < q; ++j) theta[p + j] = tm[j];
  return theta;
}

struct Minimum {
  Eigen::VectorXd theta;
  double value = kInf;
  bool converged = false;
  int iterations = 0;
};

template <class Objective>
Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

template <class Objective>
Minimum bfgs(const Objective& f, Eigen::VectorXd x, int max_iterations) {
  Minimum out;
  const Eigen::Index n = x.size();
  double fx = f(x);
  if (!std::isfinite(fx)) {
    out.theta = x;
    return out;
  }
  Eigen::VectorXd g = central_gradient(f, x);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  int flat_steps = 0;
  int it = 0;
  for (; it < max_iterations; ++it) {
    if (!g.allFinite()) break;
    if (g.cwiseAbs().maxCoeff() < 1e-6) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd d = -h * g;
    if (g.dot(d) >= 0.0) {
      h.setIdentity();
      d = -g;
    }
    const double dmax = d.cwiseAbs().maxCoeff();
    double step = dmax > 2.0 ? 2.0 / dmax : 1.0;
    const double slope = g.dot(d);
    Eigen::VectorXd xn;
    double fn = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = x + step * d;
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (h.isIdentity()) {
        out.converged = g.cwiseAbs().maxCoeff() < 1e-3;
        break;
      }
      h.setIdentity();
      continue;
    }
    const Eigen::VectorXd gn = central_gradient(f, xn);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-14) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * yv.transpose();
      h = left * h * left.transpose() + rho * s * s.transpose();
    }
    const double improvement = fx - fn;
    x = xn;
    fx = fn;
    g = gn;
    if (improvement <= 1e-13 * (1.0 + std::abs(fx))) {
      if (++flat_steps >= 3) {
        out.converged = g.cwiseAbs().maxCoeff() < 1e-3;
        break;
      }
    } else {
      flat_steps = 0;
    }
  }
  out.theta = x;
  out.value = fx;
  out.iterations = it;
  return out;
}

}  // namespace

ArmaFit fit_arma(std::span<const double> series, int p, int q, const ArmaFitOptions& options) {
  if (p < 0 || q < 0) throw PreconditionError(Stage::arma, "ARMA orders must be non-negative");
  std::vector<double> data(series.begin(), series.end());
  if (options.gap_mode == GapMode::concatenated)
    std::erase_if(data, [](double v) { return std::isnan(v); });
  const std::size_t n_obs = count_observed(data);
  if (n_obs < static_cast<std::size_t>(10 * (p + q + 1)))
    throw PreconditionError(Stage::arma, "ARMA(" + std::to_string(p) + "," + std::to_string(q) +
                                             ") needs at least " +
                                             std::to_string(10 * (p + q + 1)) + " observations");
  for (double v : data)
    if (std::isinf(v)) throw DataError(Stage::arma, "infinite value in residual series");

  if (p + q == 0) return evaluate_arma(data, {}, {}, options.gap_mode);

  const double nd = static_cast<double>(n_obs);
  auto objective = [&](const Eigen::VectorXd& theta) {
    const Unpacked u = unpack(theta, p, q);
    try {
      const FilterSums s = run_filter(data, u.ar, u.ma, options.gap_mode, false);
      const double ll = concentrated_loglik(s);
      return std::isfinite(ll) ? -ll / nd : kInf;
    } catch (const DomainError&) {
      return kInf;
    }
  };

  const Eigen::VectorXd start = hannan_rissanen(data, p, q);
  Minimum best = bfgs(objective, start, options.max_iterations);
  int restarts = 0;
  int iterations = best.iterations;
  if (!best.converged) {
    std::mt19937_64 rng(options.seed ^ (static_cast<std::uint64_t>(p) * 1000003ULL + q));
    std::normal_distribution<double> jitter(0.0, 0.5);
    for (; restarts < options.max_restarts && !best.converged;) {
      ++restarts;
      Eigen::VectorXd x0 = start;
      for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = std::clamp(x0[i] + jitter(rng), -3.0, 3.0);
      Minimum trial = bfgs(objective, x0, options.max_iterations);
      iterations += trial.iterations;
      if (trial.value < best.value || (trial.converged && trial.value <= best.value + 1e-12))
        best = trial;
    }
  }
  if (!std::isfinite(best.value))
    throw DomainError(Stage::arma, "ARMA likelihood is not finite at any starting point");

  const Unpacked u = unpack(best.theta, p, q);
  ArmaFit fit = evaluate_arma(data, u.ar, u.ma, options.gap_mode);
  fit.converged = best.converged;
  fit.iterations = iterations;
  fit.restarts = restarts;
  return fit;
}

OrderSelection select_order(std::span<const double> series, int p_max, int q_max,
                            const ArmaFitOptions& options) {
  if (p_max < 0 || q_max < 0) throw PreconditionError(Stage::arma, "order caps must be >= 0");
  const int cols = q_max + 1;
  const std::size_t cells = static_cast<std::size_t>((p_max + 1) * cols);
  std::vector<ArmaFit> fits(cells);
  OrderSelection out;
  out.cells.resize(cells);
  parallel_for(cells, [&](std::size_t i) {
    OrderCell& cell = out.cells[i];
    cell.p = static_cast<int>(i) / cols;
    cell.q = static_cast<int>(i) % cols;
    try {
      fits[i] = fit_arma(series, cell.p, cell.q, options);
      cell.ok = std::isfinite(fits[i].aic);
      cell.aic = fits[i].aic;
      cell.converged = fits[i].converged;
      if (!cell.ok) cell.error = "non-finite AIC";
      std::vector<double> neg_ma(fits[i].ma.size());
      for (std::size_t j = 0; j < neg_ma.size(); ++j) neg_ma[j] = -fits[i].ma[j];
      const double modulus =
          std::min(pacf::min_root_modulus(fits[i].ar), pacf::min_root_modulus(neg_ma));
      cell.root_modulus = modulus;
      if (cell.ok && options.min_root_modulus > 0.0) {
        if (modulus < options.min_root_modulus) {
          cell.ok = false;
          cell.error = "root modulus " + std::to_string(modulus) + " below " +
                       std::to_string(options.min_root_modulus);
        }
      }
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  });
  int best = -1;
  for (std::size_t i = 0; i < cells; ++i) {
    const OrderCell& c = out.cells[i];
    if (!c.ok) continue;
    if (best < 0) {
      best = static_cast<int>(i);
      continue;
    }
    const OrderCell& b = out.cells[best];
    const auto key = std::make_tuple(c.aic, c.p + c.q, c.p);
    const auto best_key = std::make_tuple(b.aic, b.p + b.q, b.p);
    if (key < best_key) best = static_cast<int>(i);
  }
  if (best < 0) throw DomainError(Stage::arma, "no ARMA order could be fitted");
  out.best = std::move(fits[best]);
  return out;
}

}  // namespace wqgamm

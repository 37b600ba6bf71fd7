#include "wqgamm/gam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

#include "wqgamm/errors.hpp"
#include "wqgamm/parallel.hpp"

namespace wqgamm {

double aaic(std::size_t n, double sigma2_hat, double k) {
  if (n < 1) throw DomainError(Stage::gamm, "aAIC needs n >= 1");
  if (!(sigma2_hat > 0.0)) throw DomainError(Stage::gamm, "aAIC needs a positive variance");
  if (k < 0.0) throw DomainError(Stage::gamm, "aAIC needs k >= 0");
  return static_cast<double>(n) * std::log(sigma2_hat) + 2.0 * k;
}

std::vector<std::string> GamFit::term_names() const {
  std::vector<std::string> names;
  for (const auto& t : terms) names.push_back(t.basis.covariate);
  return names;
}

std::vector<double> GamFit::lambdas() const {
  std::vector<double> out;
  for (const auto& t : terms) out.push_back(t.lambda);
  return out;
}

int GamFit::term_index(std::string_view covariate) const {
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (terms[i].basis.covariate == covariate) return static_cast<int>(i);
  return -1;
}

Eigen::Index GamFit::term_offset(int index) const {
  Eigen::Index off = 1;
  for (int i = 0; i < index; ++i) off += terms[i].coefs.size();
  return off;
}

int GamData::find(std::string_view covariate) const {
  for (std::size_t i = 0; i < bases.size(); ++i)
    if (bases[i].covariate == covariate) return static_cast<int>(i);
  return -1;
}

GamData GamData::from_frame(const AlignedFrame& frame, std::span<const SmoothSpec> specs) {
  GamData d;
  d.response = frame.response_name;
  d.rows = frame.valid_rows();
  const auto yv = frame.valid_response();
  d.y = Eigen::Map<const Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
  if (!d.y.allFinite()) throw DataError(Stage::gam, "non-finite response value");
  d.bases.resize(specs.size());
  std::vector<std::vector<double>> columns(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!frame.has_covariate(specs[i].covariate))
      throw SchemaError(Stage::gam, "frame has no covariate '" + specs[i].covariate + "'");
    columns[i] = frame.valid_values(specs[i].covariate);
  }
  parallel_for(specs.size(), [&](std::size_t i) { d.bases[i] = tprs_basis(columns[i], specs[i]); });
  return d;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Evaluation {
  double rss = 0.0;
  double edf = 0.0;
  double gcv = 0.0;
};

// QR-reduced penalized least squares for one set of terms:
//   || y - X b ||^2 + sum_k lambda_k b_k' S_k b_k
// with X = QR, so ||y - Xb||^2 = rss0 + ||f - R b||^2.
class PenalizedSolver {
 public:
  PenalizedSolver(const GamData& data, std::span<const std::size_t> terms)
      : data_(data), terms_(terms.begin(), terms.end()) {
    n_ = data.y.size();
    offsets_.push_back(1);
    for (std::size_t t : terms_) offsets_.push_back(offsets_.back() + data.bases.at(t).columns());
    p_ = offsets_.back();
    if (n_ < p_ + 5)
      throw PreconditionError(Stage::gam, "need at least " + std::to_string(p_ + 5) +
                                              " valid rows, have " + std::to_string(n_));

    const Eigen::MatrixXd x = design();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    r_ = qr.matrixQR().topRows(p_).triangularView<Eigen::Upper>();
    const Eigen::VectorXd c = qr.householderQ().adjoint() * data.y;
    f_ = c.head(p_);
    rss0_ = c.tail(n_ - p_).squaredNorm();
    rtr_ = r_.transpose() * r_;

    for (std::size_t t : terms_) {
      const Eigen::MatrixXd& s = data.bases[t].penalty;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
      const double top = es.eigenvalues().cwiseAbs().maxCoeff();
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        if (es.eigenvalues()[i] > 1e-12 * top) keep.push_back(i);
      Eigen::MatrixXd root(static_cast<Eigen::Index>(keep.size()), s.cols());
      for (std::size_t i = 0; i < keep.size(); ++i)
        root.row(static_cast<Eigen::Index>(i)) =
            std::sqrt(es.eigenvalues()[keep[i]]) * es.eigenvectors().col(keep[i]).transpose();
      roots_.push_back(std::move(root));
    }
    for (const auto& root : roots_) penalty_rows_ += root.rows();
  }

  Eigen::MatrixXd design() const {
    Eigen::MatrixXd x(n_, p_);
    x.col(0).setOnes();
    for (std::size_t i = 0; i < terms_.size(); ++i)
      x.middleCols(offsets_[i], data_.bases[terms_[i]].columns()) = data_.bases[terms_[i]].design;
    return x;
  }

  Eigen::Index n() const { return n_; }
  Eigen::Index p() const { return p_; }
  const std::vector<Eigen::Index>& offsets() const { return offsets_; }
  const std::vector<std::size_t>& terms() const { return terms_; }

  struct Solution {
    Eigen::VectorXd beta;
    Eigen::MatrixXd ra_inv;  // inverse of the augmented triangular factor
    Eigen::VectorXd edf_diag;
    double rss = 0.0;
  };

  Solution solve(std::span<const double> lambdas) const {
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(p_ + penalty_rows_, p_);
    aug.topRows(p_) = r_;
    Eigen::Index row = p_;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double w = std::sqrt(lambdas[i]);
      aug.block(row, offsets_[i], roots_[i].rows(), roots_[i].cols()) = w * roots_[i];
      row += roots_[i].rows();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(aug);
    const Eigen::MatrixXd ra = qr.matrixQR().topRows(p_).triangularView<Eigen::Upper>();
    const double dmax = ra.diagonal().cwiseAbs().maxCoeff();
    const double dmin = ra.diagonal().cwiseAbs().minCoeff();
    if (!(dmin > 1e-12 * dmax)) throw SingularFitError(Stage::gam, "penalized design is rank deficient");

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p_ + penalty_rows_);
    rhs.head(p_) = f_;
    const Eigen::VectorXd qtr = qr.householderQ().adjoint() * rhs;

    Solution s;
    s.ra_inv = ra.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p_, p_));
    s.beta = s.ra_inv * qtr.head(p_);
    s.rss = rss0_ + (f_ - r_ * s.beta).squaredNorm();
    const Eigen::MatrixXd inv = s.ra_inv * s.ra_inv.transpose();  // (X'X + S)^-1
    s.edf_diag = (inv.cwiseProduct(rtr_)).rowwise().sum();           // diag(inv * R'R)
    return s;
  }

  Evaluation evaluate(std::span<const double> lambdas) const {
    Evaluation e;
    const Solution s = solve(lambdas);
    e.rss = std::max(s.rss, 0.0);
    e.edf = s.edf_diag.sum();
    const double denom = static_cast<double>(n_) - e.edf;
    e.gcv = static_cast<double>(n_) * e.rss / (denom * denom);
    return e;
  }

 private:
  const GamData& data_;
  std::vector<std::size_t> terms_;
  Eigen::Index n_ = 0;
  Eigen::Index p_ = 0;
  std::vector<Eigen::Index> offsets_;
  Eigen::MatrixXd r_;
  Eigen::MatrixXd rtr_;
  Eigen::VectorXd f_;
  double rss0_ = 0.0;
  std::vector<Eigen::MatrixXd> roots_;
  Eigen::Index penalty_rows_ = 0;
};

double total_ss(const Eigen::VectorXd& y) { return (y.array() - y.mean()).matrix().squaredNorm(); }

GamFit make_fit(const GamData& data, const PenalizedSolver& solver, std::span<const double> lambdas) {
  const auto sol = solver.solve(lambdas);
  GamFit fit;
  fit.response = data.response;
  fit.n = static_cast<std::size_t>(solver.n());
  fit.intercept = sol.beta[0];
  const auto& offsets = solver.offsets();
  for (std::size_t i = 0; i < solver.terms().size(); ++i) {
    TermFit t;
    t.basis = data.bases[solver.terms()[i]];
    t.coefs = sol.beta.segment(offsets[i], t.basis.columns());
    t.lambda = lambdas[i];
    t.edf = sol.edf_diag.segment(offsets[i], t.basis.columns()).sum();
    fit.terms.push_back(std::move(t));
  }
  const Eigen::VectorXd fitted = solver.design() * sol.beta;
  fit.residuals = data.y - fitted;
  fit.rows = data.rows;
  fit.rss = fit.residuals.squaredNorm();
  fit.tss = total_ss(data.y);
  fit.deviance_explained = fit.tss > 0.0 ? 1.0 - fit.rss / fit.tss : 0.0;
  fit.total_edf = sol.edf_diag.sum();
  const double nd = static_cast<double>(fit.n);
  fit.sigma2_hat = fit.rss / nd;
  fit.aic = fit.sigma2_hat > 0.0 ? aaic(fit.n, fit.sigma2_hat, fit.total_edf) : -kInf;
  fit.gcv = nd * fit.rss / ((nd - fit.total_edf) * (nd - fit.total_edf));
  fit.coef_covariance = fit.sigma2_hat * (sol.ra_inv * sol.ra_inv.transpose());
  fit.search.gcv = fit.gcv;
  fit.search.best_probed_gcv = fit.gcv;
  return fit;
}

GamFit intercept_only(const GamData& data) {
  GamFit fit;
  fit.response = data.response;
  fit.n = static_cast<std::size_t>(data.y.size());
  if (data.y.size() < 6) throw PreconditionError(Stage::gam, "need at least 6 valid rows");
  fit.intercept = data.y.mean();
  fit.residuals = data.y.array() - fit.intercept;
  fit.rows = data.rows;
  fit.rss = fit.residuals.squaredNorm();
  fit.tss = fit.rss;
  fit.deviance_explained = 0.0;
  fit.total_edf = 1.0;
  const double nd = static_cast<double>(fit.n);
  fit.sigma2_hat = fit.rss / nd;
  fit.aic = fit.sigma2_hat > 0.0 ? aaic(fit.n, fit.sigma2_hat, 1.0) : -kInf;
  fit.gcv = nd * fit.rss / ((nd - 1.0) * (nd - 1.0));
  fit.coef_covariance = Eigen::MatrixXd::Constant(1, 1, fit.sigma2_hat / nd);
  fit.search.gcv = fit.search.best_probed_gcv = fit.gcv;
  return fit;
}

std::vector<std::size_t> spec_indices(const GamData& data) {
  std::vector<std::size_t> idx(data.bases.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

GamFit fit_penalized(const GamData& data, std::span<const std::size_t> terms,
                     std::span<const double> lambdas) {
  if (lambdas.size() != terms.size())
    throw PreconditionError(Stage::gam, "one smoothing parameter per term is required");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l))
      throw PreconditionError(Stage::gam, "smoothing parameters must be finite and >= 0");
  if (terms.empty()) return intercept_only(data);
  const PenalizedSolver solver(data, terms);
  return make_fit(data, solver, lambdas);
}

GamFit fit_penalized(const AlignedFrame& frame, std::span<const SmoothSpec> terms,
                     std::span<const double> lambdas) {
  const GamData data = GamData::from_frame(frame, terms);
  const auto idx = spec_indices(data);
  return fit_penalized(data, idx, lambdas);
}

GamFit select_lambdas(const GamData& data, std::span<const std::size_t> terms,
                      const GcvOptions& options) {
  if (terms.empty()) return intercept_only(data);

  // Canonical (name-sorted) order for the search.
  std::vector<std::size_t> order(terms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.bases[terms[a]].covariate < data.bases[terms[b]].covariate;
  });
  std::vector<std::size_t> sorted_terms;
  for (std::size_t i : order) sorted_terms.push_back(terms[i]);

  const PenalizedSolver solver(data, sorted_terms);
  const std::size_t m = sorted_terms.size();
  std::vector<double> rho(m, 0.0);
  std::vector<double> lambdas(m);
  LambdaSearch search;

  auto gcv_at = [&](const std::vector<double>& r) {
    for (std::size_t i = 0; i < m; ++i) lambdas[i] = std::exp(r[i]);
    ++search.evaluations;
    double g = kInf;
    try {
      g = solver.evaluate(lambdas).gcv;
    } catch (const SingularFitError&) {
      g = kInf;
    }
    if (g < search.best_probed_gcv) search.best_probed_gcv = g;
    return g;
  };

  search.best_probed_gcv = kInf;
  double current = gcv_at(rho);
  const double lo = options.log_lambda_min;
  const double hi = options.log_lambda_max;
  const int grid = std::max(options.grid_points, 3);
  const double step = (hi - lo) / (grid - 1);
  constexpr double kGolden = 0.6180339887498949;

  search.converged = false;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    const double before = current;
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<double> trial = rho;
      int best_i = -1;
      double best = kInf;
      for (int i = 0; i < grid; ++i) {
        trial[k] = lo + step * i;
        const double g = gcv_at(trial);
        if (g < best) {
          best = g;
          best_i = i;
        }
      }
      double best_rho = lo + step * std::max(best_i, 0);
      // Golden-section refinement within the neighbouring grid cells.
      double a = std::max(lo, best_rho - step);
      double b = std::min(hi, best_rho + step);
      double c = b - kGolden * (b - a);
      double d = a + kGolden * (b - a);
      trial[k] = c;
      double gc = gcv_at(trial);
      trial[k] = d;
      double gd = gcv_at(trial);
      while (b - a > 1e-4) {
        if (gc < gd) {
          b = d;
          d = c;
          gd = gc;
          c = b - kGolden * (b - a);
          trial[k] = c;
          gc = gcv_at(trial);
        } else {
          a = c;
          c = d;
          gc = gd;
          d = a + kGolden * (b - a);
          trial[k] = d;
          gd = gcv_at(trial);
        }
      }
      if (gc < best) {
        best = gc;
        best_rho = c;
      }
      if (gd < best) {
        best = gd;
        best_rho = d;
      }
      if (best < current) {
        current = best;
        rho[k] = best_rho;
      }
    }
    search.sweeps = sweep + 1;
    if (!(before - current > options.relative_tolerance * std::abs(before)) || current == 0.0) {
      search.converged = true;
      break;
    }
  }
  if (!std::isfinite(current))
    throw SingularFitError(Stage::gam, "no smoothing parameters give a full-rank fit");

  for (std::size_t i = 0; i < m; ++i) lambdas[i] = std::exp(rho[i]);
  GamFit sorted_fit = make_fit(data, solver, lambdas);

  // Restore the caller's term order.
  GamFit fit = sorted_fit;
  fit.terms.clear();
  std::vector<Eigen::Index> src_offset(m);
  for (std::size_t s = 0; s < m; ++s) src_offset[s] = sorted_fit.term_offset(static_cast<int>(s));
  std::vector<std::size_t> position(m);  // caller index -> sorted index
  for (std::size_t s = 0; s < m; ++s) position[order[s]] = s;
  std::vector<Eigen::Index> perm;  // new coefficient index -> old
  perm.push_back(0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t s = position[i];
    fit.terms.push_back(sorted_fit.terms[s]);
    for (Eigen::Index c = 0; c < sorted_fit.terms[s].coefs.size(); ++c)
      perm.push_back(src_offset[s] + c);
  }
  const auto p = static_cast<Eigen::Index>(perm.size());
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b)
      fit.coef_covariance(a, b) = sorted_fit.coef_covariance(perm[a], perm[b]);

  fit.search = search;
  fit.search.gcv = fit.gcv;
  return fit;
}

GamFit select_lambdas(const AlignedFrame& frame, std::span<const SmoothSpec> terms,
                      const GcvOptions& options) {
  const GamData data = GamData::from_frame(frame, terms);
  const auto idx = spec_indices(data);
  return select_lambdas(data, idx, options);
}

// ---------------------------------------------------------------------------
// stepwise

StepwiseResult stepwise_select(const GamData& data, const GcvOptions& options) {
  const std::size_t c = data.bases.size();
  if (c == 0) throw PreconditionError(Stage::gam, "stepwise selection needs at least one candidate");
  if (c > 60) throw PreconditionError(Stage::gam, "too many candidates");

  std::vector<std::size_t> by_name(c);
  std::iota(by_name.begin(), by_name.end(), std::size_t{0});
  std::stable_sort(by_name.begin(), by_name.end(), [&](std::size_t a, std::size_t b) {
    return data.bases[a].covariate < data.bases[b].covariate;
  });

  using Mask = unsigned long long;
  std::map<Mask, std::shared_ptr<const GamFit>> cache;
  auto members = [&](Mask mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i : by_name)
      if (mask & (Mask{1} << i)) idx.push_back(i);
    return idx;
  };
  auto names_of = [&](Mask mask) {
    std::vector<std::string> names;
    for (std::size_t i : members(mask)) names.push_back(data.bases[i].covariate);
    return names;
  };
  auto fit_model = [&](Mask mask) -> std::shared_ptr<const GamFit> {
    const auto idx = members(mask);
    try {
      return std::make_shared<const GamFit>(select_lambdas(data, idx, options));
    } catch (const SingularFitError&) {
      return nullptr;
    }
  };
  // Evaluates uncached masks (in parallel) and returns their AICs.
  auto evaluate = [&](const std::vector<Mask>& masks) {
    std::vector<Mask> todo;
    for (Mask m : masks)
      if (!cache.contains(m)) todo.push_back(m);
    std::vector<std::shared_ptr<const GamFit>> fits(todo.size());
    parallel_for(todo.size(), [&](std::size_t i) { fits[i] = fit_model(todo[i]); });
    for (std::size_t i = 0; i < todo.size(); ++i) cache[todo[i]] = fits[i];
    std::vector<double> aics;
    for (Mask m : masks) aics.push_back(cache[m] ? cache[m]->aic : kInf);
    return aics;
  };

  StepwiseResult result;
  Mask current = 0;
  double current_aic = evaluate({current})[0];
  result.trace.push_back({"start", "", current_aic, {}});

  while (true) {
    std::vector<Mask> adds;
    std::vector<std::size_t> add_terms;
    for (std::size_t i : by_name)
      if (!(current & (Mask{1} << i))) {
        adds.push_back(current | (Mask{1} << i));
        add_terms.push_back(i);
      }
    if (adds.empty()) break;
    const auto aics = evaluate(adds);
    std::size_t best = 0;
    for (std::size_t i = 1; i < aics.size(); ++i)
      if (aics[i] < aics[best]) best = i;
    if (!(aics[best] < current_aic)) break;
    current = adds[best];
    current_aic = aics[best];
    result.trace.push_back({"add", data.bases[add_terms[best]].covariate, current_aic, names_of(current)});

    // Backward pass.
    while (true) {
      std::vector<Mask> drops;
      std::vector<std::size_t> drop_terms;
      for (std::size_t i : by_name)
        if (current & (Mask{1} << i)) {
          drops.push_back(current & ~(Mask{1} << i));
          drop_terms.push_back(i);
        }
      if (drops.size() < 2) break;
      const auto drop_aics = evaluate(drops);
      std::size_t bd = 0;
      for (std::size_t i = 1; i < drop_aics.size(); ++i)
        if (drop_aics[i] < drop_aics[bd]) bd = i;
      if (!(drop_aics[bd] < current_aic)) break;
      current = drops[bd];
      current_aic = drop_aics[bd];
      result.trace.push_back(
          {"drop", data.bases[drop_terms[bd]].covariate, current_aic, names_of(current)});
    }
  }

  if (!cache[current]) throw SingularFitError(Stage::gam, "selected model could not be fitted");
  result.fit = *cache[current];
  result.models_evaluated = cache.size();
  return result;
}

StepwiseResult stepwise_select(const AlignedFrame& frame, std::span<const SmoothSpec> candidates,
                               const GcvOptions& options) {
  return stepwise_select(GamData::from_frame(frame, candidates), options);
}

// ---------------------------------------------------------------------------

SmoothBand smooth_se(const GamFit& fit, std::string_view covariate, std::span<const double> x_grid,
                     bool extrapolate) {
  const int idx = fit.term_index(covariate);
  if (idx < 0)
    throw PreconditionError(Stage::gam, "model has no term '" + std::string(covariate) + "'");
  const TermFit& term = fit.terms[idx];
  SmoothBand band;
  band.covariate = term.basis.covariate;
  band.x.assign(x_grid.begin(), x_grid.end());
  const Eigen::VectorXd est = evaluate_smooth(term.basis, term.coefs, x_grid, extrapolate);
  const Eigen::MatrixXd rows = term.basis.rows(x_grid);
  const Eigen::Index off = fit.term_offset(idx);
  const Eigen::Index k = term.coefs.size();
  const Eigen::MatrixXd v = fit.coef_covariance.block(off, off, k, k);
  const Eigen::VectorXd var = (rows * v).cwiseProduct(rows).rowwise().sum();
  band.estimate.assign(est.data(), est.data() + est.size());
  band.se.resize(x_grid.size());
  for (std::size_t i = 0; i < x_grid.size(); ++i)
    band.se[i] = std::sqrt(std::max(var[static_cast<Eigen::Index>(i)], 0.0));
  return band;
}

std::vector<double> term_grid(const GamFit& fit, std::string_view covariate, int points) {
  const int idx = fit.term_index(covariate);
  if (idx < 0)
    throw PreconditionError(Stage::gam, "model has no term '" + std::string(covariate) + "'");
  const auto& b = fit.terms[idx].basis;
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i)
    grid[i] = points == 1 ? b.x_min
                          : b.x_min + (b.x_max - b.x_min) * static_cast<double>(i) / (points - 1);
  grid.back() = b.x_max;
  return grid;
}

}  // namespace wqgamm

#include "wqgamm/gamm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wqgamm/errors.hpp"
#include "wqgamm/parallel.hpp"

namespace wqgamm {

std::vector<double> residual_series(const AlignedFrame& frame, const GamFit& fit) {
  if (frame.grid.empty()) return {};
  const Instant first = frame.grid.front();
  const auto slots = static_cast<std::size_t>((frame.grid.back() - first) / kGridStep) + 1;
  std::vector<double> out(slots, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < fit.rows.size(); ++i) {
    const std::size_t row = fit.rows[i];
    if (row >= frame.grid.size())
      throw PreconditionError(Stage::gamm, "fit rows do not belong to this frame");
    const auto slot = static_cast<std::size_t>((frame.grid[row] - first) / kGridStep);
    out[slot] = fit.residuals[static_cast<Eigen::Index>(i)];
  }
  return out;
}

GammModel compose_gamm(const GamFit& gam, const ArmaFit& arma) {
  GammModel m;
  m.gam = gam;
  m.arma = arma;
  m.n = gam.n;
  m.de_gam = gam.deviance_explained;
  const double nd = static_cast<double>(gam.n);
  m.de_total = gam.tss > 0.0 ? 1.0 - nd * arma.sigma2 / gam.tss : 0.0;
  m.de_arma = m.de_total - m.de_gam;
  m.k_gam = gam.total_edf;
  m.k_gamm = gam.total_edf + arma.p + arma.q + 1;
  m.aaic_gam = aaic(gam.n, gam.sigma2_hat, m.k_gam);
  m.aaic_gamm = aaic(gam.n, arma.sigma2, m.k_gamm);
  return m;
}

GammModel fit_gamm(const AlignedFrame& frame, std::span<const SmoothSpec> candidates,
                   const GammOptions& options) {
  if (frame.valid_count() < options.min_rows)
    throw PreconditionError(Stage::gamm, "frame has " + std::to_string(frame.valid_count()) +
                                             " valid rows, fewer than the required " +
                                             std::to_string(options.min_rows));
  StepwiseResult step = stepwise_select(frame, candidates, options.gcv);
  const auto series = residual_series(frame, step.fit);
  OrderSelection order = select_order(series, options.p_max, options.q_max, options.arma);
  GammModel m = compose_gamm(step.fit, order.best);
  m.order_cells = std::move(order.cells);
  m.selection_trace = std::move(step.trace);
  return m;
}

ImportanceReport variable_importance(const GammModel& model, const AlignedFrame& frame,
                                     const GammOptions& options) {
  const std::size_t terms = model.gam.terms.size();
  if (terms < 2)
    throw PreconditionError(Stage::gamm, "variable importance needs at least two covariates");

  GamData data;
  data.response = model.gam.response;
  data.rows = model.gam.rows;
  const auto y = frame.valid_response();
  if (y.size() != data.rows.size())
    throw PreconditionError(Stage::gamm, "model was not fitted on this frame");
  data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  for (const auto& t : model.gam.terms) data.bases.push_back(t.basis);

  ImportanceReport report;
  report.entries.resize(terms);
  report.arma_share = 100.0 * model.de_arma;
  const int p = model.arma.p;
  const int q = model.arma.q;

  parallel_for(terms, [&](std::size_t drop) {
    ImportanceEntry& e = report.entries[drop];
    e.covariate = model.gam.terms[drop].basis.covariate;
    try {
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < terms; ++i)
        if (i != drop) keep.push_back(i);
      const GamFit reduced = select_lambdas(data, keep, options.gcv);
      const auto series = residual_series(frame, reduced);
      const ArmaFit arma = fit_arma(series, p, q, options.arma);
      const double de_total =
          reduced.tss > 0.0 ? 1.0 - static_cast<double>(reduced.n) * arma.sigma2 / reduced.tss : 0.0;
      e.de_total_without = de_total;
      e.importance = 100.0 * (model.de_total - de_total);
    } catch (const std::exception& ex) {
      e.failed = true;
      e.error = ex.what();
    }
  });

  std::vector<std::size_t> order(terms);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = report.entries[a];
    const auto& eb = report.entries[b];
    if (ea.failed != eb.failed) return !ea.failed;
    return ea.importance > eb.importance;
  });
  for (std::size_t i : order) report.ranking.push_back(report.entries[i].covariate);
  return report;
}

}  // namespace wqgamm

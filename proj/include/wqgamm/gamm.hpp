#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wqgamm/arma.hpp"
#include "wqgamm/gam.hpp"
#include "wqgamm/ingest.hpp"

namespace wqgamm {

struct GammOptions {
  int p_max = 5;
  int q_max = 5;
  std::size_t min_rows = 500;
  ArmaFitOptions arma;
  GcvOptions gcv;
};

/// Two-step model: additive model first, then ARMA on its residuals.
struct GammModel {
  GamFit gam;
  ArmaFit arma;
  std::vector<OrderCell> order_cells;
  std::size_t n = 0;
  double de_gam = 0.0;
  double de_total = 0.0;  ///< 1 - n * innovation variance / TSS
  double de_arma = 0.0;   ///< de_total - de_gam
  double k_gam = 0.0;     ///< total edf
  double k_gamm = 0.0;    ///< total edf + p + q + 1
  double aaic_gam = 0.0;
  double aaic_gamm = 0.0;
  std::vector<StepwiseStep> selection_trace;
};

/// GAM residuals laid out on the full 15-minute lattice from the first to the
/// last grid instant; invalid rows and absent lattice slots are NaN.
std::vector<double> residual_series(const AlignedFrame& frame, const GamFit& fit);

/// Runs stepwise selection, then ARMA order selection on the residuals.
GammModel fit_gamm(const AlignedFrame& frame, std::span<const SmoothSpec> candidates,
                   const GammOptions& options = {});

/// Composes a model from an already fitted GAM and ARMA.
GammModel compose_gamm(const GamFit& gam, const ArmaFit& arma);

struct ImportanceEntry {
  std::string covariate;
  double importance = 0.0;  ///< percentage points of deviance
  double de_total_without = 0.0;
  bool failed = false;
  std::string error;
};

struct ImportanceReport {
  std::vector<ImportanceEntry> entries;  ///< model term order
  double arma_share = 0.0;               ///< 100 * de_arma of the full model
  std::vector<std::string> ranking;      ///< most important first
};

/// Drops each covariate in turn, re-selects smoothing parameters, refits the
/// ARMA coefficients at the model's (p, q) and reports the loss in total
/// deviance explained.
ImportanceReport variable_importance(const GammModel& model, const AlignedFrame& frame,
                                     const GammOptions& options = {});

}  // namespace wqgamm

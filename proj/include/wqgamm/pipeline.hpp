#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wqgamm/config.hpp"
#include "wqgamm/gamm.hpp"
#include "wqgamm/ingest.hpp"
#include "wqgamm/svg.hpp"

namespace wqgamm {

using Json = nlohmann::ordered_json;

inline constexpr int kReportVersion = 1;

/// Reads the configured inputs and aligns them on the nitrate grid.
AlignedFrame load_frame(const RunConfig& config);

struct VifStage {
  double threshold = 6.0;
  std::vector<VifScreenEntry> entries;
  std::vector<std::string> survivors;  ///< candidate order
};

/// VIF screening of the configured candidates over the frame's valid rows.
/// Throws SchemaError when a candidate column is absent.
VifStage screen_candidates(const AlignedFrame& frame, const RunConfig& config);

std::vector<SmoothSpec> smooth_specs(const std::vector<std::string>& covariates, const RunConfig& config);
GammOptions gamm_options(const RunConfig& config);

struct PipelineResult {
  AlignedFrame frame;
  std::vector<ColumnSummary> summary;
  VifStage vif;
  GammModel model;
  std::optional<ImportanceReport> importance;

  /// False when the smoothing-parameter search or the selected ARMA fit did
  /// not converge.
  bool converged() const;
};

PipelineResult run_pipeline(const RunConfig& config);
/// Same, on an already aligned frame.
PipelineResult run_pipeline(AlignedFrame frame, const RunConfig& config);

// --- JSON report -----------------------------------------------------------

Json summary_json(const std::vector<ColumnSummary>& summary);
Json vif_json(const VifStage& vif);
Json gam_json(const GamFit& fit, const std::vector<StepwiseStep>& trace);
Json arma_json(const ArmaFit& fit, const std::vector<OrderCell>& cells, GapMode mode);
Json importance_json(const ImportanceReport& report);
Json build_report(const PipelineResult& result, const RunConfig& config);

/// Two-space indented JSON with a trailing newline.
std::string dump_json(const Json& doc);

/// Readers used by the plot command; throw SchemaError when the report lacks
/// the requested data.
SmoothBand band_from_report(const Json& report, const std::string& covariate);
std::vector<std::string> report_terms(const Json& report);
std::vector<ColumnSummary> summary_from_report(const Json& report);
std::vector<svg::Bar> importance_bars(const Json& report);

struct Artifacts {
  std::filesystem::path report;
  std::vector<std::filesystem::path> figures;
};

/// Writes SVG figures for a report (smooths/, summary.svg, importance.svg)
/// and, when a frame is given, diel.svg.
std::vector<std::filesystem::path> write_figures(const Json& report, const std::filesystem::path& dir,
                                                 const AlignedFrame* frame, const RunConfig& config);

/// report.json, frame.csv and every figure under config.output.
Artifacts write_artifacts(const PipelineResult& result, const RunConfig& config);

/// Process exit code for a pipeline failure: 2 for data errors, 3 for fit
/// failures, 1 otherwise.
int exit_code_for(const std::exception& error);

}  // namespace wqgamm

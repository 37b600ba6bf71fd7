#include "wqgamm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wqgamm/errors.hpp"
#include "wqgamm/neon_client.hpp"
#include "wqgamm/parallel.hpp"

namespace wqgamm {

namespace fs = std::filesystem;

namespace {

Json real(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

Json reals(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(real(x));
  return a;
}

Json reals(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(real(v[i]));
  return a;
}

const Json& require(const Json& j, const char* key, const char* context) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(Stage::report, std::string("report is missing ") + context + "." + key);
  return j.at(key);
}

double number(const Json& j, const char* key, const char* context) {
  const Json& v = require(j, key, context);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw SchemaError(Stage::report, std::string(context) + "." + key + " is not a number");
  return v.get<double>();
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PreconditionError(Stage::report, "cannot write " + path.string());
  out << content;
  if (!out) throw PreconditionError(Stage::report, "failed writing " + path.string());
}

Instant default_diel_start(const AlignedFrame& frame) {
  return std::chrono::floor<std::chrono::days>(frame.grid.front());
}

}  // namespace

AlignedFrame load_frame(const RunConfig& config) {
  validate(config);
  AlignOptions align_options;
  align_options.tolerance =
      std::chrono::duration_cast<Duration>(std::chrono::duration<double>(config.tolerance_seconds));

  std::vector<SensorSeries> others;
  std::optional<SensorSeries> nitrate;
  auto take = [&](SensorSeries s) {
    if (s.variable == "nitrate")
      nitrate = std::move(s);
    else
      others.push_back(std::move(s));
  };

  if (!config.wide.empty()) {
    for (auto& loaded : load_wide(config.wide)) take(std::move(loaded.series));
  } else if (!config.series.empty()) {
    for (const auto& [var, path] : config.series) take(load_series(path, ColumnSchema{}, var).series);
  } else {
    for (const auto& m : neon::table_mappings()) {
      try {
        take(neon::read_neon_series(config.neon_dir, m).series);
      } catch (const EmptyInputError&) {
        if (m.variable == "nitrate") throw;
      }
    }
  }
  if (!nitrate) throw SchemaError(Stage::ingest, "no nitrate series in the configured input");
  return align(*nitrate, others, align_options);
}

VifStage screen_candidates(const AlignedFrame& frame, const RunConfig& config) {
  VifStage out;
  out.threshold = config.vif_threshold;
  std::vector<NamedColumn> columns;
  for (const auto& name : config.candidates) {
    if (!frame.has_covariate(name) || name == frame.response_name)
      throw SchemaError(Stage::ingest, "candidate covariate '" + name + "' is not in the data");
    columns.push_back({name, frame.valid_values(name)});
  }
  if (columns.size() == 1) {
    out.entries.push_back({columns[0].name, 1.0, 1.0, false, 0});
    out.survivors.push_back(columns[0].name);
    return out;
  }
  out.entries = vif_screen(columns, config.vif_threshold);
  for (const auto& e : out.entries)
    if (!e.excluded) out.survivors.push_back(e.name);
  return out;
}

std::vector<SmoothSpec> smooth_specs(const std::vector<std::string>& covariates, const RunConfig& config) {
  std::vector<SmoothSpec> specs;
  for (const auto& c : covariates) specs.push_back({c, config.basis_dim_for(c)});
  return specs;
}

GammOptions gamm_options(const RunConfig& config) {
  GammOptions o;
  o.p_max = config.p_max;
  o.q_max = config.q_max;
  o.min_rows = config.min_rows;
  o.arma.gap_mode = config.gap_mode;
  o.arma.seed = config.seed;
  o.arma.min_root_modulus = config.min_root_modulus;
  return o;
}

bool PipelineResult::converged() const { return model.gam.search.converged && model.arma.converged; }

PipelineResult run_pipeline(const RunConfig& config) { return run_pipeline(load_frame(config), config); }

PipelineResult run_pipeline(AlignedFrame frame, const RunConfig& config) {
  validate(config, false);
  PipelineResult r;
  r.frame = std::move(frame);
  r.summary = summarize(r.frame);
  r.vif = screen_candidates(r.frame, config);
  const auto specs = smooth_specs(r.vif.survivors, config);
  const GammOptions options = gamm_options(config);
  r.model = fit_gamm(r.frame, specs, options);
  if (config.importance && r.model.gam.terms.size() >= 2)
    r.importance = variable_importance(r.model, r.frame, options);
  return r;
}

Json summary_json(const std::vector<ColumnSummary>& summary) {
  Json a = Json::array();
  for (const auto& c : summary) {
    a.push_back({{"name", c.name},
                 {"unit", std::string(unit_for(c.name))},
                 {"count", c.count},
                 {"missing", c.missing},
                 {"min", real(c.min)},
                 {"q1", real(c.q1)},
                 {"median", real(c.median)},
                 {"mean", real(c.mean)},
                 {"q3", real(c.q3)},
                 {"max", real(c.max)},
                 {"whisker_low", real(c.whisker_low)},
                 {"whisker_high", real(c.whisker_high)}});
  }
  return a;
}

Json vif_json(const VifStage& vif) {
  Json entries = Json::array();
  for (const auto& e : vif.entries) {
    entries.push_back({{"name", e.name},
                       {"initial_vif", real(e.initial_vif)},
                       {"initial_infinite", std::isinf(e.initial_vif)},
                       {"final_vif", real(e.final_vif)},
                       {"final_infinite", std::isinf(e.final_vif)},
                       {"excluded", e.excluded},
                       {"removal_order", e.removal_order}});
  }
  return {{"threshold", vif.threshold}, {"entries", entries}, {"survivors", vif.survivors}};
}

Json gam_json(const GamFit& fit, const std::vector<StepwiseStep>& trace) {
  Json terms = Json::array();
  for (const auto& t : fit.terms) {
    const auto grid = term_grid(fit, t.basis.covariate);
    const SmoothBand band = smooth_se(fit, t.basis.covariate, grid);
    terms.push_back({{"covariate", t.basis.covariate},
                     {"unit", std::string(unit_for(t.basis.covariate))},
                     {"basis_dim", t.basis.basis_dim()},
                     {"edf", real(t.edf)},
                     {"lambda", real(t.lambda)},
                     {"x_min", real(t.basis.x_min)},
                     {"x_max", real(t.basis.x_max)},
                     {"coefficients", reals(t.coefs)},
                     {"curve", {{"x", reals(band.x)}, {"estimate", reals(band.estimate)}, {"se", reals(band.se)}}}});
  }
  Json steps = Json::array();
  for (const auto& s : trace)
    steps.push_back({{"action", s.action}, {"term", s.term}, {"aaic", real(s.aic)}, {"model", s.model}});
  return {{"response", fit.response},
          {"n", fit.n},
          {"intercept", real(fit.intercept)},
          {"rss", real(fit.rss)},
          {"tss", real(fit.tss)},
          {"deviance_explained", real(fit.deviance_explained)},
          {"total_edf", real(fit.total_edf)},
          {"sigma2", real(fit.sigma2_hat)},
          {"aaic", real(fit.aic)},
          {"gcv", real(fit.gcv)},
          {"lambda_search",
           {{"converged", fit.search.converged},
            {"sweeps", fit.search.sweeps},
            {"evaluations", fit.search.evaluations}}},
          {"terms", terms},
          {"stepwise", steps}};
}

Json arma_json(const ArmaFit& fit, const std::vector<OrderCell>& cells, GapMode mode) {
  Json grid = Json::array();
  for (const auto& c : cells) {
    grid.push_back({{"p", c.p},
                    {"q", c.q},
                    {"ok", c.ok},
                    {"aic", c.ok || std::isfinite(c.aic) ? real(c.aic) : Json(nullptr)},
                    {"converged", c.converged},
                    {"root_modulus", real(c.root_modulus)},
                    {"error", c.error}});
  }
  return {{"p", fit.p},
          {"q", fit.q},
          {"ar", fit.ar},
          {"ma", fit.ma},
          {"sigma2", real(fit.sigma2)},
          {"loglik", real(fit.loglik)},
          {"aic", real(fit.aic)},
          {"n_eff", fit.n_eff},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"restarts", fit.restarts},
          {"gap_mode", to_string(mode)},
          {"grid", grid}};
}

Json importance_json(const ImportanceReport& report) {
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"covariate", e.covariate},
                       {"importance", e.failed ? Json(nullptr) : real(e.importance)},
                       {"de_total_without", e.failed ? Json(nullptr) : real(e.de_total_without)},
                       {"failed", e.failed},
                       {"error", e.error}});
  }
  return {{"unit", "percentage points of total deviance"},
          {"arma_share", real(report.arma_share)},
          {"entries", entries},
          {"ranking", report.ranking}};
}

Json build_report(const PipelineResult& r, const RunConfig& config) {
  const GammModel& m = r.model;
  Json doc;
  doc["format"] = "wqgamm-report";
  doc["version"] = kReportVersion;
  doc["site"] = config.site;
  Json basis = Json::object();
  for (const auto& c : config.candidates) basis[c] = config.basis_dim_for(c);
  doc["settings"] = {{"seed", config.seed},
                     {"candidates", config.candidates},
                     {"basis_dim", basis},
                     {"vif_threshold", config.vif_threshold},
                     {"p_max", config.p_max},
                     {"q_max", config.q_max},
                     {"gap_mode", to_string(config.gap_mode)},
                     {"min_rows", config.min_rows},
                     {"min_root_modulus", config.min_root_modulus},
                     {"tolerance_seconds", config.tolerance_seconds}};
  doc["data"] = {{"rows", r.frame.rows()},
                 {"valid_rows", r.frame.valid_count()},
                 {"first", r.frame.grid.empty() ? Json(nullptr) : Json(format_rfc3339(r.frame.grid.front()))},
                 {"last", r.frame.grid.empty() ? Json(nullptr) : Json(format_rfc3339(r.frame.grid.back()))},
                 {"gaps", r.frame.gaps.size()}};
  doc["summary"] = summary_json(r.summary);
  doc["vif"] = vif_json(r.vif);
  doc["gam"] = gam_json(m.gam, m.selection_trace);
  doc["arma"] = arma_json(m.arma, m.order_cells, config.gap_mode);
  doc["gamm"] = {{"n", m.n},
                 {"de_gam", real(m.de_gam)},
                 {"de_total", real(m.de_total)},
                 {"de_arma", real(m.de_arma)},
                 {"k_gam", real(m.k_gam)},
                 {"k_gamm", real(m.k_gamm)},
                 {"aaic_gam", real(m.aaic_gam)},
                 {"aaic_gamm", real(m.aaic_gamm)}};
  Json table = Json::array();
  table.push_back({{"model", "GAM"},
                   {"arma_order", nullptr},
                   {"k", real(m.k_gam)},
                   {"sigma2", real(m.gam.sigma2_hat)},
                   {"deviance_explained", real(m.de_gam)},
                   {"aaic", real(m.aaic_gam)}});
  table.push_back({{"model", "GAMM"},
                   {"arma_order", {m.arma.p, m.arma.q}},
                   {"k", real(m.k_gamm)},
                   {"sigma2", real(m.arma.sigma2)},
                   {"deviance_explained", real(m.de_total)},
                   {"aaic", real(m.aaic_gamm)}});
  doc["aaic_table"] = table;
  doc["importance"] = r.importance ? importance_json(*r.importance) : Json(nullptr);
  doc["converged"] = r.converged();
  return doc;
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

std::vector<std::string> report_terms(const Json& report) {
  const Json& terms = require(require(report, "gam", "report"), "terms", "gam");
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(require(t, "covariate", "gam.terms[]").get<std::string>());
  return out;
}

SmoothBand band_from_report(const Json& report, const std::string& covariate) {
  const Json& terms = require(require(report, "gam", "report"), "terms", "gam");
  for (const auto& t : terms) {
    if (require(t, "covariate", "gam.terms[]") != covariate) continue;
    const Json& curve = require(t, "curve", "gam.terms[]");
    SmoothBand band;
    band.covariate = covariate;
    for (const char* key : {"x", "estimate", "se"}) {
      const Json& arr = require(curve, key, "gam.terms[].curve");
      if (!arr.is_array()) throw SchemaError(Stage::report, std::string("curve.") + key + " is not an array");
      std::vector<double>& dst =
          key[0] == 'x' ? band.x : (key[0] == 'e' ? band.estimate : band.se);
      for (const auto& v : arr)
        dst.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    }
    if (band.x.size() != band.estimate.size() || band.x.size() != band.se.size() || band.x.empty())
      throw SchemaError(Stage::report, "curve arrays for '" + covariate + "' are inconsistent");
    return band;
  }
  throw SchemaError(Stage::report, "report has no term '" + covariate + "'");
}

std::vector<ColumnSummary> summary_from_report(const Json& report) {
  std::vector<ColumnSummary> out;
  for (const auto& s : require(report, "summary", "report")) {
    ColumnSummary c;
    c.name = require(s, "name", "summary[]").get<std::string>();
    c.count = require(s, "count", "summary[]").get<std::size_t>();
    c.missing = require(s, "missing", "summary[]").get<std::size_t>();
    c.min = number(s, "min", "summary[]");
    c.q1 = number(s, "q1", "summary[]");
    c.median = number(s, "median", "summary[]");
    c.mean = number(s, "mean", "summary[]");
    c.q3 = number(s, "q3", "summary[]");
    c.max = number(s, "max", "summary[]");
    c.whisker_low = number(s, "whisker_low", "summary[]");
    c.whisker_high = number(s, "whisker_high", "summary[]");
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<svg::Bar> importance_bars(const Json& report) {
  const Json& imp = require(report, "importance", "report");
  if (imp.is_null()) return {};
  std::vector<svg::Bar> bars;
  const Json& entries = require(imp, "entries", "importance");
  for (const auto& name : require(imp, "ranking", "importance")) {
    for (const auto& e : entries) {
      if (e.at("covariate") != name || e.at("failed").get<bool>()) continue;
      bars.push_back({name.get<std::string>(), number(e, "importance", "importance.entries[]")});
    }
  }
  bars.push_back({"ARMA", number(imp, "arma_share", "importance")});
  return bars;
}

std::vector<fs::path> write_figures(const Json& report, const fs::path& dir, const AlignedFrame* frame,
                                    const RunConfig& config) {
  std::vector<fs::path> out;
  fs::create_directories(dir / "smooths");
  const std::string site = report.contains("site") ? report["site"].get<std::string>() : config.site;
  for (const auto& term : report_terms(report)) {
    const fs::path p = dir / "smooths" / (term + ".svg");
    write_text(p, svg::smooth(band_from_report(report, term), unit_for(term)));
    out.push_back(p);
  }
  const auto summary = summary_from_report(report);
  write_text(dir / "summary.svg", svg::boxplots(summary, site + ": water-quality data"));
  out.push_back(dir / "summary.svg");
  const auto bars = importance_bars(report);
  if (!bars.empty()) {
    write_text(dir / "importance.svg",
               svg::bars(bars, site + ": variable importance", "percentage of total deviance"));
    out.push_back(dir / "importance.svg");
  }
  if (frame && !frame->grid.empty()) {
    const Instant start = config.diel_start.value_or(default_diel_start(*frame));
    write_text(dir / "diel.svg", svg::diel(*frame, start, config.diel_days, config.utc_offset_hours,
                                           site + ": diel variation"));
    out.push_back(dir / "diel.svg");
  }
  return out;
}

Artifacts write_artifacts(const PipelineResult& result, const RunConfig& config) {
  fs::create_directories(config.output);
  Artifacts a;
  const Json report = build_report(result, config);
  a.report = config.output / "report.json";
  write_text(a.report, dump_json(report));
  write_frame_csv(result.frame, config.output / "frame.csv");
  a.figures = write_figures(report, config.output, &result.frame, config);
  return a;
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const DataError*>(&error)) return 2;
  if (dynamic_cast<const SingularFitError*>(&error) || dynamic_cast<const DomainError*>(&error)) return 3;
  return 1;
}

}  // namespace wqgamm

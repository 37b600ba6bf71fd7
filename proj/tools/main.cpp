#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "wqgamm/errors.hpp"
#include "wqgamm/neon_client.hpp"
#include "wqgamm/parallel.hpp"
#include "wqgamm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wqgamm;

namespace {

struct DataArgs {
  std::string config;
  std::string frame;
  std::string wide;
  std::vector<std::string> candidates;
  double vif_threshold = 0.0;
  int basis_dim = 0;
  std::string gap_mode;
  std::string output;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("-c,--config", a.config, "Run configuration file");
  cmd->add_option("--frame", a.frame, "Aligned frame CSV (as written by `ingest`)");
  cmd->add_option("--wide", a.wide, "Wide CSV with a timestamp column and one column per variable");
  cmd->add_option("--candidates", a.candidates, "Candidate covariates")->delimiter(',');
  cmd->add_option("--vif-threshold", a.vif_threshold, "VIF exclusion threshold");
  cmd->add_option("--basis-dim", a.basis_dim, "Basis dimension for every smooth");
  cmd->add_option("--gap-mode", a.gap_mode, "ARMA gap handling: kalman, segmented or concatenated");
  cmd->add_option("-o,--output", a.output, "Output file or directory");
}

RunConfig make_config(const DataArgs& a) {
  RunConfig c = a.config.empty() ? RunConfig{} : load_config(a.config);
  apply_env_overrides(c);
  if (!a.wide.empty()) {
    c.wide = a.wide;
    c.series.clear();
    c.neon_dir.clear();
  }
  if (!a.candidates.empty()) c.candidates = a.candidates;
  if (a.vif_threshold > 0.0) c.vif_threshold = a.vif_threshold;
  if (a.basis_dim > 0) c.basis_dim = a.basis_dim;
  if (!a.gap_mode.empty()) c.gap_mode = parse_gap_mode(a.gap_mode);
  if (!a.output.empty()) c.output = a.output;
  return c;
}

AlignedFrame make_frame(const DataArgs& a, const RunConfig& c) {
  if (!a.frame.empty()) return read_frame_csv(fs::path(a.frame));
  return load_frame(c);
}

void emit(const Json& doc, const std::string& path) {
  if (path.empty()) {
    std::cout << dump_json(doc);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError(Stage::report, "cannot write " + path);
  out << dump_json(doc);
}

Json gamm_doc(const GammModel& m, const RunConfig& c) {
  Json doc;
  doc["gam"] = gam_json(m.gam, m.selection_trace);
  doc["arma"] = arma_json(m.arma, m.order_cells, c.gap_mode);
  doc["gamm"] = {{"n", m.n},          {"de_gam", m.de_gam},     {"de_total", m.de_total},
                 {"de_arma", m.de_arma}, {"k_gam", m.k_gam},     {"k_gamm", m.k_gamm},
                 {"aaic_gam", m.aaic_gam}, {"aaic_gamm", m.aaic_gamm}};
  return doc;
}

GammModel fit_model(const AlignedFrame& frame, const RunConfig& c) {
  const VifStage vif = screen_candidates(frame, c);
  return fit_gamm(frame, smooth_specs(vif.survivors, c), gamm_options(c));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step GAM + ARMA modelling of high-frequency nitrate sensor data"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads for parallel steps (0 = all cores)");

  // fetch
  auto* fetch = app.add_subcommand("fetch", "Download NEON data product files");
  neon::ProductRequest request;
  std::string months, dest = "neon", base_url, release;
  bool live = false;
  fetch->add_option("--product", request.product_id, "Data product id, e.g. DP1.20033.001")->required();
  fetch->add_option("--site", request.site_code, "Four-letter site code")->required();
  fetch->add_option("--months", months, "Comma list of YYYY-MM or a range YYYY-MM..YYYY-MM")->required();
  fetch->add_option("--dest", dest, "Destination directory");
  fetch->add_option("--release", release, "Release tag (default RELEASE-2021; 'latest' for none)");
  fetch->add_option("--package", request.package, "basic or expanded");
  fetch->add_option("--base-url", base_url, "API root (default $NEON_API_BASE or the public API)");
  fetch->add_flag("--live", live, "Allow requests to the public NEON API");

  DataArgs ingest_args, summarize_args, vif_args, gam_args, gamm_args, importance_args;
  auto* ingest = app.add_subcommand("ingest", "Align sensor series and write the aligned frame CSV");
  add_data_options(ingest, ingest_args);
  auto* summarize_cmd = app.add_subcommand("summarize", "Summary statistics (JSON) and box plots");
  add_data_options(summarize_cmd, summarize_args);
  std::string summary_svg;
  summarize_cmd->add_option("--svg", summary_svg, "Also write box plots to this SVG file");
  auto* vif_cmd = app.add_subcommand("vif", "VIF screening of the candidate covariates");
  add_data_options(vif_cmd, vif_args);
  auto* gam_cmd = app.add_subcommand("fit-gam", "Stepwise GAM selection");
  add_data_options(gam_cmd, gam_args);
  auto* gamm_cmd = app.add_subcommand("fit-gamm", "GAM followed by ARMA order selection on the residuals");
  add_data_options(gamm_cmd, gamm_args);
  auto* imp_cmd = app.add_subcommand("importance", "Variable importance of the fitted GAMM");
  add_data_options(imp_cmd, importance_args);

  auto* plot = app.add_subcommand("plot", "Render SVG figures from a report");
  std::string report_path, plot_dir = "figures", plot_frame, plot_config, diel_start;
  int diel_days = 0;
  double utc_offset = 0.0;
  plot->add_option("--report", report_path, "report.json")->required();
  plot->add_option("-o,--output", plot_dir, "Output directory");
  plot->add_option("--frame", plot_frame, "Aligned frame CSV for the diel figure");
  plot->add_option("-c,--config", plot_config, "Run configuration (plot section)");
  plot->add_option("--diel-start", diel_start, "Start of the diel window (RFC 3339)");
  plot->add_option("--diel-days", diel_days, "Length of the diel window in days");
  plot->add_option("--utc-offset", utc_offset, "Site-local offset from UTC in hours");

  auto* pipeline = app.add_subcommand("pipeline", "Run every step and write report.json and figures");
  std::string pipeline_config, pipeline_output;
  pipeline->add_option("-c,--config", pipeline_config, "Run configuration file")->required();
  pipeline->add_option("-o,--output", pipeline_output, "Output directory (overrides run.output)");

  CLI11_PARSE(app, argc, argv);
  set_max_threads(threads);

  try {
    if (fetch->parsed()) {
      if (months.find("..") != std::string::npos) {
        const auto dots = months.find("..");
        request.months = neon::month_range(months.substr(0, dots), months.substr(dots + 2));
      } else {
        std::stringstream ss(months);
        for (std::string m; std::getline(ss, m, ',');)
          if (!m.empty()) request.months.push_back(m);
      }
      if (release == "latest")
        request.release_tag.reset();
      else if (!release.empty())
        request.release_tag = release;
      neon::ClientOptions options;
      options.base_url = base_url;
      options.allow_live = live;
      const auto result = neon::fetch(request, dest, options);
      for (const auto& p : result.paths) std::cout << p.string() << "\n";
      std::cerr << result.files_downloaded << " downloaded (" << result.bytes_downloaded << " bytes), "
                << result.files_cached << " already present\n";
      return 0;
    }
    if (ingest->parsed()) {
      const RunConfig c = make_config(ingest_args);
      const AlignedFrame frame = make_frame(ingest_args, c);
      const fs::path out = ingest_args.output.empty() ? fs::path("frame.csv") : fs::path(ingest_args.output);
      write_frame_csv(frame, out);
      std::cerr << frame.rows() << " rows, " << frame.valid_count() << " valid, " << frame.gaps.size()
                << " gaps -> " << out.string() << "\n";
      return 0;
    }
    if (summarize_cmd->parsed()) {
      const RunConfig c = make_config(summarize_args);
      const auto summary = summarize(make_frame(summarize_args, c));
      emit(summary_json(summary), summarize_args.output);
      if (!summary_svg.empty()) {
        std::ofstream out(summary_svg, std::ios::binary);
        out << svg::boxplots(summary, c.site + ": water-quality data");
      }
      return 0;
    }
    if (vif_cmd->parsed()) {
      const RunConfig c = make_config(vif_args);
      emit(vif_json(screen_candidates(make_frame(vif_args, c), c)), vif_args.output);
      return 0;
    }
    if (gam_cmd->parsed()) {
      const RunConfig c = make_config(gam_args);
      const AlignedFrame frame = make_frame(gam_args, c);
      const VifStage vif = screen_candidates(frame, c);
      const auto specs = smooth_specs(vif.survivors, c);
      const StepwiseResult step = stepwise_select(frame, specs);
      emit(gam_json(step.fit, step.trace), gam_args.output);
      return step.fit.search.converged ? 0 : 3;
    }
    if (gamm_cmd->parsed()) {
      const RunConfig c = make_config(gamm_args);
      const GammModel m = fit_model(make_frame(gamm_args, c), c);
      emit(gamm_doc(m, c), gamm_args.output);
      return m.gam.search.converged && m.arma.converged ? 0 : 3;
    }
    if (imp_cmd->parsed()) {
      const RunConfig c = make_config(importance_args);
      const AlignedFrame frame = make_frame(importance_args, c);
      const GammModel m = fit_model(frame, c);
      emit(importance_json(variable_importance(m, frame, gamm_options(c))), importance_args.output);
      return 0;
    }
    if (plot->parsed()) {
      RunConfig c = plot_config.empty() ? RunConfig{} : load_config(plot_config);
      apply_env_overrides(c);
      if (!diel_start.empty()) {
        const auto t = parse_rfc3339(diel_start);
        if (!t) throw SchemaError(Stage::config, "invalid --diel-start '" + diel_start + "'");
        c.diel_start = *t;
      }
      if (diel_days > 0) c.diel_days = diel_days;
      if (plot->count("--utc-offset")) c.utc_offset_hours = utc_offset;
      std::ifstream in(report_path);
      if (!in) throw SchemaError(Stage::report, "cannot open report " + report_path);
      Json report;
      try {
        report = Json::parse(in);
      } catch (const Json::exception& e) {
        throw SchemaError(Stage::report, std::string("malformed report: ") + e.what());
      }
      std::optional<AlignedFrame> frame;
      if (!plot_frame.empty()) frame = read_frame_csv(fs::path(plot_frame));
      for (const auto& p : write_figures(report, plot_dir, frame ? &*frame : nullptr, c))
        std::cout << p.string() << "\n";
      return 0;
    }
    if (pipeline->parsed()) {
      RunConfig c = load_config(pipeline_config);
      apply_env_overrides(c);
      if (!pipeline_output.empty()) c.output = pipeline_output;
      if (threads == 0 && c.threads != 0) set_max_threads(c.threads);
      const PipelineResult result = run_pipeline(c);
      const Artifacts artifacts = write_artifacts(result, c);
      std::cerr << "report: " << artifacts.report.string() << "\n";
      const auto& m = result.model;
      std::cerr << "GAM deviance explained " << m.de_gam << ", GAMM " << m.de_total << ", ARMA(" << m.arma.p
                << "," << m.arma.q << ")\n";
      if (!result.converged()) {
        std::cerr << "[gamm] fit did not converge; results written but flagged\n";
        return 3;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}

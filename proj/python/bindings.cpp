#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "wqgamm/arma.hpp"
#include "wqgamm/basis.hpp"
#include "wqgamm/errors.hpp"
#include "wqgamm/gam.hpp"
#include "wqgamm/gamm.hpp"
#include "wqgamm/parallel.hpp"
#include "wqgamm/pipeline.hpp"
#include "wqgamm/simulate.hpp"

namespace py = pybind11;
using namespace wqgamm;

namespace {

std::vector<double> with_nan(const std::vector<std::optional<double>>& values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
  return out;
}

std::vector<SmoothSpec> specs_for(const std::vector<std::string>& names, int basis_dim) {
  std::vector<SmoothSpec> specs;
  for (const auto& n : names) specs.push_back({n, basis_dim});
  return specs;
}

std::string gam_text(const GamFit& fit, const std::vector<StepwiseStep>& trace) {
  return dump_json(gam_json(fit, trace));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-step GAM + ARMA modelling of high-frequency water-quality data";

  // Translators run in reverse registration order, so the subclass comes last.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("set_max_threads", &set_max_threads, py::arg("threads"));

  py::class_<AlignedFrame>(m, "Frame")
      .def_property_readonly("timestamps",
                             [](const AlignedFrame& f) {
                               std::vector<std::string> out;
                               for (auto t : f.grid) out.push_back(format_rfc3339(t));
                               return out;
                             })
      .def_readonly("response_name", &AlignedFrame::response_name)
      .def_readonly("response", &AlignedFrame::response)
      .def_property_readonly("covariates",
                             [](const AlignedFrame& f) {
                               py::dict d;
                               for (const auto& [name, col] : f.covariates) d[py::str(name)] = col;
                               return d;
                             })
      .def_property_readonly("valid",
                             [](const AlignedFrame& f) { return std::vector<bool>(f.valid.begin(), f.valid.end()); })
      .def("valid_count", &AlignedFrame::valid_count)
      .def("__len__", &AlignedFrame::rows);

  m.def("read_frame", [](const std::filesystem::path& p) { return read_frame_csv(p); }, py::arg("path"));
  m.def("write_frame", [](const AlignedFrame& f, const std::filesystem::path& p) { write_frame_csv(f, p); },
        py::arg("frame"), py::arg("path"));
  m.def("load_frame",
        [](const std::filesystem::path& config) {
          RunConfig c = load_config(config);
          apply_env_overrides(c);
          return load_frame(c);
        },
        py::arg("config"), "Reads and aligns the inputs named by a run configuration file.");
  m.def("simulate",
        [](std::uint64_t seed, std::size_t n) {
          sim::SimulationSpec spec;
          spec.seed = seed;
          spec.n = n;
          return sim::simulate(spec).frame;
        },
        py::arg("seed") = 1, py::arg("n") = 10000,
        "Frame from the additive model with ARMA(2,1) errors (four active smooths, two noise covariates).");

  m.def("summarize",
        [](const AlignedFrame& f) { return dump_json(summary_json(summarize(f))); }, py::arg("frame"));

  m.def("tprs_basis",
        [](const std::vector<double>& x, int k) {
          const BasisExpansion b = tprs_basis(x, SmoothSpec{"x", k});
          return py::make_tuple(b.design, b.penalty);
        },
        py::arg("x"), py::arg("basis_dim") = 7, "Constrained design and penalty matrices.");

  m.def("vif",
        [](const std::vector<std::pair<std::string, std::vector<double>>>& columns) {
          std::vector<NamedColumn> cols;
          for (const auto& [n, v] : columns) cols.push_back({n, v});
          std::vector<std::pair<std::string, double>> out;
          for (const auto& e : vif(cols)) out.emplace_back(e.name, e.vif);
          return out;
        },
        py::arg("columns"), "VIF per column; inf for perfectly collinear columns.");

  m.def("fit_gam",
        [](const AlignedFrame& f, const std::vector<std::string>& candidates, bool stepwise, int basis_dim) {
          const auto specs = specs_for(candidates, basis_dim);
          if (stepwise) {
            const StepwiseResult r = stepwise_select(f, specs);
            return gam_text(r.fit, r.trace);
          }
          return gam_text(select_lambdas(f, specs), {});
        },
        py::arg("frame"), py::arg("candidates"), py::arg("stepwise") = true, py::arg("basis_dim") = 7);

  m.def("arma_loglik",
        [](const std::vector<std::optional<double>>& series, const std::vector<double>& ar,
           const std::vector<double>& ma, double sigma2, const std::string& gap_mode) {
          return arma_loglik(with_nan(series), ArmaParams{ar, ma, sigma2}, parse_gap_mode(gap_mode));
        },
        py::arg("series"), py::arg("ar"), py::arg("ma"), py::arg("sigma2"), py::arg("gap_mode") = "kalman");

  m.def("fit_arma",
        [](const std::vector<std::optional<double>>& series, int p, int q, const std::string& gap_mode) {
          ArmaFitOptions o;
          o.gap_mode = parse_gap_mode(gap_mode);
          const ArmaFit fit = fit_arma(with_nan(series), p, q, o);
          return dump_json(arma_json(fit, {}, o.gap_mode));
        },
        py::arg("series"), py::arg("p"), py::arg("q"), py::arg("gap_mode") = "kalman");

  m.def("select_order",
        [](const std::vector<std::optional<double>>& series, int p_max, int q_max, const std::string& gap_mode) {
          ArmaFitOptions o;
          o.gap_mode = parse_gap_mode(gap_mode);
          const OrderSelection s = select_order(with_nan(series), p_max, q_max, o);
          return dump_json(arma_json(s.best, s.cells, o.gap_mode));
        },
        py::arg("series"), py::arg("p_max") = 5, py::arg("q_max") = 5, py::arg("gap_mode") = "kalman");

  m.def("aaic", &aaic, py::arg("n"), py::arg("sigma2"), py::arg("k"));

  m.def("run_pipeline",
        [](const AlignedFrame& f, const std::vector<std::string>& candidates, bool importance,
           int p_max, int q_max) {
          RunConfig c;
          c.candidates = candidates;
          c.importance = importance;
          c.p_max = p_max;
          c.q_max = q_max;
          py::gil_scoped_release release;
          const PipelineResult r = run_pipeline(f, c);
          return dump_json(build_report(r, c));
        },
        py::arg("frame"), py::arg("candidates"), py::arg("importance") = true, py::arg("p_max") = 5,
        py::arg("q_max") = 5, "Full two-step fit on a frame; returns the report as JSON text.");

  m.def("run_config",
        [](const std::filesystem::path& config, const std::optional<std::filesystem::path>& output) {
          RunConfig c = load_config(config);
          apply_env_overrides(c);
          if (output) c.output = *output;
          py::gil_scoped_release release;
          const PipelineResult r = run_pipeline(c);
          write_artifacts(r, c);
          return dump_json(build_report(r, c));
        },
        py::arg("config"), py::arg("output") = std::nullopt,
        "Runs the pipeline from a configuration file and writes its artifacts.");
}

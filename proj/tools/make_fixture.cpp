// Writes the synthetic wide-CSV fixture: the additive model with ARMA(2,1)
// errors, covariates mapped onto plausible physical ranges, a 12-hour outage
// and a few flagged nitrate readings.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "wqgamm/simulate.hpp"

using namespace wqgamm;

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic sensor fixture"};
  std::string out = "fixture.csv";
  std::size_t rows = 5000;
  std::uint64_t seed = 7;
  app.add_option("-o,--output", out, "Output CSV");
  app.add_option("--rows", rows, "Number of 15-minute rows");
  app.add_option("--seed", seed, "Random seed");
  CLI11_PARSE(app, argc, argv);

  sim::SimulationSpec spec;
  spec.n = rows;
  spec.seed = seed;
  spec.noise_covariates = {"log_turbidity"};
  const sim::Simulation s = sim::simulate(spec);
  const AlignedFrame& f = s.frame;

  struct Mapping {
    const char* column;
    const char* source;
    double offset, scale;
  };
  const Mapping maps[] = {{"cond", "cond", 200.0, 600.0},    {"do", "do", 6.0, 6.0},
                          {"temp", "temp", 0.0, 25.0},       {"turbidity", "log_turbidity", 0.2, 3.0},
                          {"elevation", "elevation", 1100.0, 0.8}};

  std::mt19937_64 rng(seed + 1);
  std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
  std::vector<std::uint8_t> flagged(rows, 0);
  for (int i = 0; i < 20; ++i) flagged[pick(rng)] = 1;
  const std::size_t outage_begin = rows * 2 / 5, outage_end = outage_begin + 48;

  std::ofstream o(out);
  o << "timestamp,nitrate,nitrate_qc";
  for (const auto& m : maps) o << ',' << m.column;
  o << '\n';
  char buf[64];
  for (std::size_t i = 0; i < rows; ++i) {
    if (i >= outage_begin && i < outage_end) continue;
    std::snprintf(buf, sizeof buf, "%.17g", f.response[i]);
    o << format_rfc3339(f.grid[i]) << ',' << buf << ',' << int(flagged[i]);
    for (const auto& m : maps) {
      double u = f.covariate(m.source)[i];
      double v = m.offset + m.scale * u;
      if (std::string_view(m.column) == "turbidity") v = std::expm1(v);
      std::snprintf(buf, sizeof buf, "%.17g", v);
      o << ',' << buf;
    }
    o << '\n';
  }
  std::cerr << "wrote " << out << "\n";
  return 0;
}

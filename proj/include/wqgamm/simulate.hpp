#pragma once

// Simulated sensor data from the additive model with ARMA errors.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "wqgamm/ingest.hpp"

namespace wqgamm::sim {

struct TrueSmooth {
  std::string covariate;
  std::function<double(double)> f;  // uncentered
};

inline std::vector<TrueSmooth> default_smooths() {
  using std::numbers::pi;
  return {
      {"temp", [](double x) { return 1.5 * std::sin(pi * (2.0 * x - 0.5)); }},
      {"cond", [](double x) { return 0.6 * std::exp(1.5 * x); }},
      {"do", [](double x) { return 1.2 * x * x * x; }},
      {"elevation", [](double x) { return 0.5 * std::cos(pi * x); }},
  };
}

struct SimulationSpec {
  std::size_t n = 10000;
  std::vector<TrueSmooth> smooths = default_smooths();
  std::vector<std::string> noise_covariates = {"log_turbidity", "noise"};
  std::vector<double> ar = {1.2, -0.5};
  std::vector<double> ma = {0.4};
  double sigma = 0.25;
  double intercept = 10.0;
  std::uint64_t seed = 1;
  Instant start = Instant{std::chrono::sys_days{std::chrono::year{2018} / 9 / 1}};
};

struct Simulation {
  AlignedFrame frame;
  std::vector<double> eta;         // ARMA error
  std::vector<double> innovation;  // eps
  std::vector<std::vector<double>> smooth_values;  // per true smooth, uncentered
};

inline std::vector<double> simulate_arma(std::size_t n, const std::vector<double>& ar,
                                         const std::vector<double>& ma, double sigma,
                                         std::mt19937_64& rng, std::vector<double>* eps_out = nullptr) {
  std::normal_distribution<double> normal(0.0, sigma);
  const std::size_t burn = 2000;
  std::vector<double> eta(n + burn, 0.0), eps(n + burn, 0.0);
  for (std::size_t t = 0; t < n + burn; ++t) {
    eps[t] = normal(rng);
    double v = eps[t];
    for (std::size_t j = 0; j < ar.size(); ++j)
      if (t > j) v += ar[j] * eta[t - 1 - j];
    for (std::size_t l = 0; l < ma.size(); ++l)
      if (t > l) v += ma[l] * eps[t - 1 - l];
    eta[t] = v;
  }
  if (eps_out) eps_out->assign(eps.begin() + burn, eps.end());
  return {eta.begin() + burn, eta.end()};
}

/// Frame with the response built from the true smooths of iid U(0,1)
/// covariates plus ARMA noise; noise covariates are iid U(0,1) too.
inline Simulation simulate(const SimulationSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Simulation sim;
  AlignedFrame& f = sim.frame;
  f.response_name = "nitrate";
  f.grid.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) f.grid[i] = spec.start + kGridStep * static_cast<long>(i);

  for (const auto& s : spec.smooths) {
    Column x(spec.n);
    for (auto& v : x) v = unif(rng);
    f.covariates.emplace_back(s.covariate, std::move(x));
  }
  for (const auto& name : spec.noise_covariates) {
    Column x(spec.n);
    for (auto& v : x) v = unif(rng);
    f.covariates.emplace_back(name, std::move(x));
  }
  sim.eta = simulate_arma(spec.n, spec.ar, spec.ma, spec.sigma, rng, &sim.innovation);

  f.response.assign(spec.n, spec.intercept);
  for (std::size_t k = 0; k < spec.smooths.size(); ++k) {
    std::vector<double> vals(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) vals[i] = spec.smooths[k].f(f.covariates[k].second[i]);
    for (std::size_t i = 0; i < spec.n; ++i) f.response[i] += vals[i];
    sim.smooth_values.push_back(std::move(vals));
  }
  for (std::size_t i = 0; i < spec.n; ++i) f.response[i] += sim.eta[i];

  Column time(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) time[i] = days_between(f.grid.front(), f.grid[i]);
  f.covariates.emplace_back(std::string(kTimeColumn), std::move(time));
  f.valid.assign(spec.n, 1);
  return sim;
}

}  // namespace wqgamm::sim

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wqgamm/arma.hpp"
#include "wqgamm/time.hpp"

namespace wqgamm {

/// Settings for one pipeline run.
///
/// Text form (see README):
///
///   [run]
///   site = ARIK
///   output = out
///   [input]
///   wide = data.csv
///   [model]
///   vif_threshold = 6
///
/// Every key can be overridden by an environment variable named
/// WQGAMM_<SECTION>_<KEY> in upper case with dots turned into underscores,
/// e.g. WQGAMM_MODEL_VIF_THRESHOLD or WQGAMM_MODEL_BASIS_DIM_TEMP.
struct RunConfig {
  // [run]
  std::string site = "site";
  std::filesystem::path output = "out";
  std::uint64_t seed = 20210129;
  unsigned threads = 0;  ///< 0 = all available cores

  // [input]: exactly one of wide, series or neon_dir
  std::filesystem::path wide;
  std::map<std::string, std::filesystem::path> series;  ///< variable -> single-series CSV
  std::filesystem::path neon_dir;
  double tolerance_seconds = 60.0;

  // [model]
  std::vector<std::string> candidates = {"cond", "do", "temp", "log_turbidity", "elevation",
                                         "time_days"};
  int basis_dim = 7;
  std::map<std::string, int> basis_dims;  ///< per-covariate override
  double vif_threshold = 6.0;
  int p_max = 5;
  int q_max = 5;
  GapMode gap_mode = GapMode::kalman;
  std::size_t min_rows = 500;
  double min_root_modulus = 1.01;
  bool importance = true;

  // [plot]
  std::optional<Instant> diel_start;  ///< defaults to the first grid midnight
  int diel_days = 5;
  double utc_offset_hours = 0.0;  ///< site-local offset shown on time axes

  int basis_dim_for(std::string_view covariate) const;
};

/// Parses the text form. Unknown sections or keys are errors.
/// Relative input paths are resolved against `base_dir`.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {},
                       std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies WQGAMM_* environment overrides. `lookup` defaults to getenv.
void apply_env_overrides(RunConfig& config,
                         const std::function<std::optional<std::string>(const std::string&)>& lookup = {});

/// Checks the invariants (positive thresholds, one input source, ...).
/// With `require_input` false the input section is not checked.
void validate(const RunConfig& config, bool require_input = true);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

}  // namespace wqgamm

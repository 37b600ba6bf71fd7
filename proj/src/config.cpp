#include "wqgamm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "wqgamm/errors.hpp"

namespace wqgamm {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& series_variables() {
  static const std::vector<std::string> v = {"nitrate", "cond", "do", "temp", "turbidity", "elevation"};
  return v;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw SchemaError(Stage::config, "invalid value '" + value + "' for " + key + " (expected " +
                                       expected + ")");
}

double to_real(const std::string& key, const std::string& value) {
  const auto v = csv::parse_real(value);
  if (!v) bad_value(key, value, "a number");
  return *v;
}

long long to_integer(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "yes" || value == "on" || value == "1") return true;
  if (value == "false" || value == "no" || value == "off" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string> to_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = csv::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::string env_name(const std::string& dotted) {
  std::string out = "WQGAMM_";
  for (char c : dotted) out.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

// Applies one "section.key = value" assignment.
void assign(RunConfig& c, const std::string& key, const std::string& value, const fs::path& base) {
  if (key == "run.site") {
    c.site = value;
  } else if (key == "run.output") {
    c.output = resolve(base, value);
  } else if (key == "run.seed") {
    const auto v = to_integer(key, value);
    if (v < 0) bad_value(key, value, "a non-negative integer");
    c.seed = static_cast<std::uint64_t>(v);
  } else if (key == "run.threads") {
    const auto v = to_integer(key, value);
    if (v < 0) bad_value(key, value, "a non-negative integer");
    c.threads = static_cast<unsigned>(v);
  } else if (key == "input.wide") {
    c.wide = value.empty() ? fs::path{} : resolve(base, value);
  } else if (key == "input.neon_dir") {
    c.neon_dir = value.empty() ? fs::path{} : resolve(base, value);
  } else if (key == "input.tolerance_seconds") {
    c.tolerance_seconds = to_real(key, value);
  } else if (key.starts_with("input.series.")) {
    const std::string var = key.substr(13);
    if (std::find(series_variables().begin(), series_variables().end(), var) == series_variables().end())
      throw SchemaError(Stage::config, "unknown series variable '" + var + "'");
    if (value.empty())
      c.series.erase(var);
    else
      c.series[var] = resolve(base, value);
  } else if (key == "model.candidates") {
    c.candidates = to_list(value);
  } else if (key == "model.basis_dim") {
    c.basis_dim = static_cast<int>(to_integer(key, value));
  } else if (key.starts_with("model.basis_dim.")) {
    c.basis_dims[key.substr(16)] = static_cast<int>(to_integer(key, value));
  } else if (key == "model.vif_threshold") {
    c.vif_threshold = to_real(key, value);
  } else if (key == "model.p_max") {
    c.p_max = static_cast<int>(to_integer(key, value));
  } else if (key == "model.q_max") {
    c.q_max = static_cast<int>(to_integer(key, value));
  } else if (key == "model.gap_mode") {
    try {
      c.gap_mode = parse_gap_mode(value);
    } catch (const Error&) {
      bad_value(key, value, "kalman, segmented or concatenated");
    }
  } else if (key == "model.min_rows") {
    const auto v = to_integer(key, value);
    if (v < 0) bad_value(key, value, "a non-negative integer");
    c.min_rows = static_cast<std::size_t>(v);
  } else if (key == "model.min_root_modulus") {
    c.min_root_modulus = to_real(key, value);
  } else if (key == "model.importance") {
    c.importance = to_bool(key, value);
  } else if (key == "plot.diel_start") {
    if (value.empty()) {
      c.diel_start.reset();
    } else {
      auto t = parse_rfc3339(value);
      if (!t) bad_value(key, value, "an RFC 3339 timestamp");
      c.diel_start = *t;
    }
  } else if (key == "plot.diel_days") {
    c.diel_days = static_cast<int>(to_integer(key, value));
  } else if (key == "plot.utc_offset_hours") {
    c.utc_offset_hours = to_real(key, value);
  } else {
    throw SchemaError(Stage::config, "unknown setting '" + key + "'");
  }
}

const std::vector<std::string>& static_keys() {
  static const std::vector<std::string> keys = {
      "run.site",          "run.output",          "run.seed",           "run.threads",
      "input.wide",        "input.neon_dir",      "input.tolerance_seconds",
      "model.candidates",  "model.basis_dim",     "model.vif_threshold", "model.p_max",
      "model.q_max",       "model.gap_mode",      "model.min_rows",     "model.min_root_modulus",
      "model.importance",  "plot.diel_start",     "plot.diel_days",     "plot.utc_offset_hours"};
  return keys;
}

}  // namespace

int RunConfig::basis_dim_for(std::string_view covariate) const {
  auto it = basis_dims.find(std::string(covariate));
  return it == basis_dims.end() ? basis_dim : it->second;
}

RunConfig parse_config(std::istream& in, const fs::path& base_dir, std::string_view source) {
  RunConfig c;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t(csv::trim(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw SchemaError(Stage::config, std::string(source) + ":" + std::to_string(line_no) +
                                             ": malformed section header");
      section = std::string(csv::trim(std::string_view(t).substr(1, t.size() - 2)));
      if (section != "run" && section != "input" && section != "model" && section != "plot")
        throw SchemaError(Stage::config, std::string(source) + ":" + std::to_string(line_no) +
                                             ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos || section.empty())
      throw SchemaError(Stage::config, std::string(source) + ":" + std::to_string(line_no) +
                                           ": expected 'key = value' inside a section");
    const std::string key(csv::trim(std::string_view(t).substr(0, eq)));
    const std::string value(csv::trim(std::string_view(t).substr(eq + 1)));
    assign(c, section + "." + key, value, base_dir);
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(Stage::config, "cannot open config " + path.string());
  return parse_config(in, path.parent_path(), path.string());
}

void apply_env_overrides(RunConfig& c,
                         const std::function<std::optional<std::string>(const std::string&)>& lookup) {
  auto get = [&](const std::string& name) -> std::optional<std::string> {
    if (lookup) return lookup(name);
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
  std::vector<std::string> keys = static_keys();
  for (const auto& v : series_variables()) keys.push_back("input.series." + v);
  // Overrides of the candidate list come first so per-term keys can follow it.
  if (auto v = get(env_name("model.candidates"))) assign(c, "model.candidates", *v, {});
  std::vector<std::string> names = c.candidates;
  for (const auto& [name, dim] : c.basis_dims) names.push_back(name);
  for (const auto& n : names) keys.push_back("model.basis_dim." + n);
  for (const auto& key : keys) {
    if (key == "model.candidates") continue;
    if (auto v = get(env_name(key))) assign(c, key, std::string(csv::trim(*v)), fs::current_path());
  }
}

void validate(const RunConfig& c, bool require_input) {
  auto fail = [](const std::string& msg) { throw SchemaError(Stage::config, msg); };
  const int sources = (!c.wide.empty()) + (!c.series.empty()) + (!c.neon_dir.empty());
  if (require_input && sources != 1)
    fail("exactly one of input.wide, input.series.* or input.neon_dir must be set");
  if (require_input && !c.series.empty() && !c.series.contains("nitrate"))
    fail("input.series.nitrate is required");
  if (!(c.tolerance_seconds >= 0.0)) fail("input.tolerance_seconds must be >= 0");
  if (c.candidates.empty()) fail("model.candidates is empty");
  if (c.basis_dim < 3) fail("model.basis_dim must be >= 3");
  for (const auto& [name, dim] : c.basis_dims)
    if (dim < 3) fail("model.basis_dim." + name + " must be >= 3");
  if (!(c.vif_threshold > 0.0)) fail("model.vif_threshold must be positive");
  if (c.p_max < 0 || c.q_max < 0 || c.p_max > 10 || c.q_max > 10)
    fail("model.p_max and model.q_max must lie in [0, 10]");
  if (c.min_rows == 0) fail("model.min_rows must be positive");
  if (!(c.min_root_modulus >= 0.0)) fail("model.min_root_modulus must be >= 0");
  if (c.diel_days <= 0) fail("plot.diel_days must be positive");
  if (std::abs(c.utc_offset_hours) > 14.0) fail("plot.utc_offset_hours must lie in [-14, 14]");
}

std::string to_text(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n";
  o << "site = " << c.site << "\n";
  o << "output = " << c.output.generic_string() << "\n";
  o << "seed = " << c.seed << "\n";
  o << "threads = " << c.threads << "\n";
  o << "\n[input]\n";
  if (!c.wide.empty()) o << "wide = " << c.wide.generic_string() << "\n";
  for (const auto& [var, path] : c.series) o << "series." << var << " = " << path.generic_string() << "\n";
  if (!c.neon_dir.empty()) o << "neon_dir = " << c.neon_dir.generic_string() << "\n";
  o << "tolerance_seconds = " << csv::format_real(c.tolerance_seconds) << "\n";
  o << "\n[model]\n";
  o << "candidates = ";
  for (std::size_t i = 0; i < c.candidates.size(); ++i) o << (i ? ", " : "") << c.candidates[i];
  o << "\n";
  o << "basis_dim = " << c.basis_dim << "\n";
  for (const auto& [name, dim] : c.basis_dims) o << "basis_dim." << name << " = " << dim << "\n";
  o << "vif_threshold = " << csv::format_real(c.vif_threshold) << "\n";
  o << "p_max = " << c.p_max << "\n";
  o << "q_max = " << c.q_max << "\n";
  o << "gap_mode = " << to_string(c.gap_mode) << "\n";
  o << "min_rows = " << c.min_rows << "\n";
  o << "min_root_modulus = " << csv::format_real(c.min_root_modulus) << "\n";
  o << "importance = " << (c.importance ? "true" : "false") << "\n";
  o << "\n[plot]\n";
  if (c.diel_start) o << "diel_start = " << format_rfc3339(*c.diel_start) << "\n";
  o << "diel_days = " << c.diel_days << "\n";
  o << "utc_offset_hours = " << csv::format_real(c.utc_offset_hours) << "\n";
  return o.str();
}

}  // namespace wqgamm

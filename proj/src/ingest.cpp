#include "wqgamm/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "wqgamm/errors.hpp"

namespace wqgamm {

namespace csv {

std::optional<double> parse_real(std::string_view field) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_real(double value) {
  if (!std::isfinite(value)) return {};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

}  // namespace csv

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int find_column(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (csv::trim(header[i]) == name) return static_cast<int>(i);
  return -1;
}

struct RawRow {
  Instant t;
  double value;
  std::uint8_t flag;
};

std::optional<std::uint8_t> parse_flag(std::string_view field) {
  field = csv::trim(field);
  if (field.empty() || field == "0" || field == "0.0") return 0;
  if (field == "1" || field == "1.0") return 1;
  return std::nullopt;
}

// Stable-sorts by time and drops later duplicates; fills the series.
LoadedSeries finish_series(std::vector<RawRow> rows, LoadReport report, std::string variable,
                           std::string unit, bool has_flags, std::string_view source) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RawRow& a, const RawRow& b) { return a.t < b.t; });
  LoadedSeries out;
  out.series.variable = std::move(variable);
  out.series.unit = unit.empty() ? std::string(unit_for(out.series.variable)) : std::move(unit);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!out.series.timestamps.empty() && rows[i].t == out.series.timestamps.back()) {
      ++report.duplicates;
      continue;
    }
    out.series.timestamps.push_back(rows[i].t);
    out.series.values.push_back(rows[i].value);
    if (has_flags) out.series.qc_flags.push_back(rows[i].flag);
  }
  if (out.series.timestamps.empty())
    throw EmptyInputError(Stage::ingest,
                          "no parseable rows for '" + out.series.variable + "' in " +
                              std::string(source));
  out.report = report;
  return out;
}

}  // namespace

std::string_view unit_for(std::string_view variable) {
  static const std::map<std::string, std::string, std::less<>> units = {
      {"nitrate", "umol/L"},   {"cond", "uS/cm"},  {"do", "mg/L"},
      {"temp", "degC"},        {"turbidity", "FNU"}, {"log_turbidity", "log(FNU+1)"},
      {"elevation", "m"},      {"time_days", "days"}};
  auto it = units.find(variable);
  return it == units.end() ? std::string_view{} : std::string_view{it->second};
}

LoadedSeries load_series(std::istream& in, const ColumnSchema& schema, std::string variable,
                         std::string unit, std::string_view source) {
  std::string line;
  if (!std::getline(in, line))
    throw EmptyInputError(Stage::ingest, "empty input " + std::string(source));
  const auto header = csv::split_record(line);
  const int ts_col = find_column(header, schema.timestamp);
  const int val_col = find_column(header, schema.value);
  if (ts_col < 0)
    throw SchemaError(Stage::ingest, "missing column '" + schema.timestamp + "' in " +
                                         std::string(source));
  if (val_col < 0)
    throw SchemaError(Stage::ingest,
                      "missing column '" + schema.value + "' in " + std::string(source));
  const int qc_col = schema.qc_flag.empty() ? -1 : find_column(header, schema.qc_flag);

  std::vector<RawRow> rows;
  LoadReport report;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    ++report.rows_read;
    const auto fields = csv::split_record(line);
    const auto need = static_cast<std::size_t>(std::max({ts_col, val_col, qc_col}));
    if (fields.size() <= need) {
      ++report.unparseable;
      continue;
    }
    const auto t = parse_rfc3339(fields[ts_col]);
    const auto v = csv::parse_real(fields[val_col]);
    std::optional<std::uint8_t> flag = std::uint8_t{0};
    if (qc_col >= 0) flag = parse_flag(fields[qc_col]);
    if (!t || !v || !flag) {
      ++report.unparseable;
      continue;
    }
    rows.push_back({*t, *v, *flag});
  }
  return finish_series(std::move(rows), report, std::move(variable), std::move(unit), qc_col >= 0,
                       source);
}

LoadedSeries merge_series(std::span<const LoadedSeries> parts) {
  if (parts.empty()) throw EmptyInputError(Stage::ingest, "nothing to merge");
  std::vector<RawRow> rows;
  LoadReport report;
  bool has_flags = false;
  for (const auto& part : parts) {
    const SensorSeries& s = part.series;
    report.rows_read += part.report.rows_read;
    report.unparseable += part.report.unparseable;
    report.duplicates += part.report.duplicates;
    has_flags = has_flags || !s.qc_flags.empty();
    for (std::size_t i = 0; i < s.size(); ++i)
      rows.push_back({s.timestamps[i], s.values[i], static_cast<std::uint8_t>(s.flagged(i) ? 1 : 0)});
  }
  return finish_series(std::move(rows), report, parts.front().series.variable,
                       parts.front().series.unit, has_flags, "merged series");
}

LoadedSeries load_series(const std::filesystem::path& path, const ColumnSchema& schema,
                         std::string variable, std::string unit) {
  std::ifstream in(path);
  if (!in) throw EmptyInputError(Stage::ingest, "cannot open " + path.string());
  return load_series(in, schema, std::move(variable), std::move(unit), path.string());
}

std::vector<LoadedSeries> load_wide(std::istream& in, std::string_view source) {
  std::string line;
  if (!std::getline(in, line))
    throw EmptyInputError(Stage::ingest, "empty input " + std::string(source));
  const auto header = csv::split_record(line);
  const int ts_col = find_column(header, "timestamp");
  if (ts_col < 0)
    throw SchemaError(Stage::ingest, "missing column 'timestamp' in " + std::string(source));

  struct VarCols {
    std::string name;
    int value;
    int qc;
  };
  std::vector<VarCols> vars;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(csv::trim(header[i]));
    if (static_cast<int>(i) == ts_col || name == "valid") continue;
    if (name.size() > 3 && name.ends_with("_qc")) continue;
    vars.push_back({name, static_cast<int>(i), find_column(header, name + "_qc")});
  }
  if (vars.empty())
    throw SchemaError(Stage::ingest, "no variable columns in " + std::string(source));

  std::vector<std::vector<RawRow>> rows(vars.size());
  std::vector<LoadReport> reports(vars.size());
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_record(line);
    const auto t = fields.size() > static_cast<std::size_t>(ts_col)
                       ? parse_rfc3339(fields[ts_col])
                       : std::nullopt;
    for (std::size_t v = 0; v < vars.size(); ++v) {
      ++reports[v].rows_read;
      if (!t || fields.size() <= static_cast<std::size_t>(vars[v].value)) {
        ++reports[v].unparseable;
        continue;
      }
      const auto value = csv::parse_real(fields[vars[v].value]);
      std::optional<std::uint8_t> flag = std::uint8_t{0};
      if (vars[v].qc >= 0)
        flag = fields.size() > static_cast<std::size_t>(vars[v].qc) ? parse_flag(fields[vars[v].qc])
                                                                   : std::nullopt;
      if (!value || !flag) {
        ++reports[v].unparseable;
        continue;
      }
      rows[v].push_back({*t, *value, *flag});
    }
  }
  std::vector<LoadedSeries> out;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    if (rows[v].empty()) continue;
    out.push_back(finish_series(std::move(rows[v]), reports[v], vars[v].name, {},
                                vars[v].qc >= 0, source));
  }
  if (out.empty()) throw EmptyInputError(Stage::ingest, "no parseable rows in " + std::string(source));
  return out;
}

std::vector<LoadedSeries> load_wide(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EmptyInputError(Stage::ingest, "cannot open " + path.string());
  return load_wide(in, path.string());
}

void write_series_csv(const SensorSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(Stage::ingest, "cannot write " + path.string());
  out << "timestamp,value";
  if (!series.qc_flags.empty()) out << ",qc_flag";
  out << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_rfc3339(series.timestamps[i]) << ',' << csv::format_real(series.values[i]);
    if (!series.qc_flags.empty()) out << ',' << int(series.qc_flags[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// AlignedFrame

std::size_t AlignedFrame::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

bool AlignedFrame::has_covariate(std::string_view name) const noexcept {
  return std::any_of(covariates.begin(), covariates.end(),
                     [&](const auto& c) { return c.first == name; });
}

const Column& AlignedFrame::covariate(std::string_view name) const {
  for (const auto& c : covariates)
    if (c.first == name) return c.second;
  if (name == response_name) return response;
  throw SchemaError(Stage::ingest, "frame has no column '" + std::string(name) + "'");
}

std::vector<std::string> AlignedFrame::covariate_names() const {
  std::vector<std::string> names;
  for (const auto& c : covariates) names.push_back(c.first);
  return names;
}

std::vector<std::size_t> AlignedFrame::valid_rows() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) idx.push_back(i);
  return idx;
}

std::vector<double> AlignedFrame::valid_values(std::string_view column) const {
  const Column& col = covariate(column);
  std::vector<double> out;
  out.reserve(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) out.push_back(col[i]);
  return out;
}

std::vector<double> AlignedFrame::valid_response() const { return valid_values(response_name); }

namespace {

std::vector<Gap> compute_gaps(const std::vector<Instant>& grid) {
  std::vector<Gap> gaps;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const auto step = grid[i] - grid[i - 1];
    if (step > kGridStep)
      gaps.push_back({grid[i - 1], grid[i], static_cast<std::size_t>(step / kGridStep) - 1});
  }
  return gaps;
}

bool anomalous(std::string_view variable, double value) {
  return (variable == "turbidity" || variable == "cond") && value < 0.0;
}

void finalize_frame(AlignedFrame& f) {
  f.valid.assign(f.rows(), 0);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    bool ok = std::isfinite(f.response[i]);
    for (const auto& c : f.covariates) ok = ok && std::isfinite(c.second[i]);
    f.valid[i] = ok ? 1 : 0;
  }
  f.gaps = compute_gaps(f.grid);
}

}  // namespace

AlignedFrame align(const SensorSeries& nitrate, std::span<const SensorSeries> others,
                   const AlignOptions& options) {
  if (nitrate.size() == 0) throw PreconditionError(Stage::ingest, "nitrate series is empty");
  if (options.tolerance < Duration::zero())
    throw PreconditionError(Stage::ingest, "alignment tolerance must be >= 0");

  AlignedFrame f;
  f.response_name = nitrate.variable.empty() ? "nitrate" : nitrate.variable;

  // Snap nitrate timestamps onto the lattice.
  std::vector<std::string> offenders;
  std::size_t offender_count = 0;
  for (std::size_t i = 0; i < nitrate.size(); ++i) {
    const long long ms = nitrate.timestamps[i].time_since_epoch().count();
    const long long step = kGridStep.count();
    long long floor_ms = ms / step * step;
    if (floor_ms > ms) floor_ms -= step;
    const Instant lower{Duration{floor_ms}};
    const Instant upper = lower + kGridStep;
    const Instant snapped =
        (nitrate.timestamps[i] - lower) <= (upper - nitrate.timestamps[i]) ? lower : upper;
    const auto off = snapped > nitrate.timestamps[i] ? snapped - nitrate.timestamps[i]
                                                     : nitrate.timestamps[i] - snapped;
    if (off > options.tolerance) {
      if (offenders.size() < 10) offenders.push_back(format_rfc3339(nitrate.timestamps[i]));
      ++offender_count;
      continue;
    }
    if (!f.grid.empty() && snapped <= f.grid.back()) continue;  // keep first after snapping
    f.grid.push_back(snapped);
    f.response.push_back(nitrate.flagged(i) ? kNaN : nitrate.values[i]);
  }
  if (offender_count > 0) {
    std::string msg = std::to_string(offender_count) +
                      " nitrate timestamp(s) off the 15-minute lattice:";
    for (const auto& o : offenders) msg += " " + o;
    if (offender_count > offenders.size()) msg += " ...";
    throw AlignmentError(Stage::ingest, msg);
  }

  for (const auto& s : others) {
    const bool is_turbidity = s.variable == "turbidity";
    Column col(f.rows(), kNaN);
    std::size_t j = 0;  // first index with timestamp > grid instant
    for (std::size_t i = 0; i < f.rows(); ++i) {
      while (j < s.size() && s.timestamps[j] <= f.grid[i]) ++j;
      if (j == 0) continue;
      const std::size_t k = j - 1;
      if (f.grid[i] - s.timestamps[k] > options.tolerance) continue;
      if (s.flagged(k) || anomalous(s.variable, s.values[k])) continue;
      col[i] = is_turbidity ? std::log1p(s.values[k]) : s.values[k];
    }
    f.covariates.emplace_back(is_turbidity ? "log_turbidity" : s.variable, std::move(col));
  }

  Column time(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) time[i] = days_between(f.grid.front(), f.grid[i]);
  f.covariates.emplace_back(std::string(kTimeColumn), std::move(time));

  finalize_frame(f);
  if (f.valid_count() == 0)
    throw EmptyInputError(Stage::ingest, "every aligned row is invalid (flags, anomalies or "
                                         "missing covariates)");
  return f;
}

std::pair<SensorSeries, std::vector<SensorSeries>> frame_to_series(const AlignedFrame& frame) {
  auto to_series = [&](const std::string& name, const Column& col) {
    SensorSeries s;
    s.variable = name;
    s.unit = std::string(unit_for(name));
    s.timestamps = frame.grid;
    s.values.resize(col.size());
    s.qc_flags.resize(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) {
      const bool present = std::isfinite(col[i]);
      s.values[i] = present ? col[i] : 0.0;
      s.qc_flags[i] = present ? 0 : 1;
    }
    return s;
  };
  std::vector<SensorSeries> others;
  for (const auto& [name, col] : frame.covariates)
    if (name != kTimeColumn) others.push_back(to_series(name, col));
  return {to_series(frame.response_name, frame.response), std::move(others)};
}

// ---------------------------------------------------------------------------
// summaries

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return kNaN;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ColumnSummary summarize_column(std::string name, std::span<const double> values) {
  ColumnSummary s;
  s.name = std::move(name);
  std::vector<double> v;
  v.reserve(values.size());
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  s.count = v.size();
  s.missing = values.size() - v.size();
  if (v.empty()) {
    s.min = s.q1 = s.median = s.mean = s.q3 = s.max = s.whisker_low = s.whisker_high = kNaN;
    return s;
  }
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = *std::lower_bound(v.begin(), v.end(), lo_fence);
  s.whisker_high = *(std::upper_bound(v.begin(), v.end(), hi_fence) - 1);
  return s;
}

std::vector<ColumnSummary> summarize(const AlignedFrame& frame) {
  if (frame.valid_count() == 0)
    throw PreconditionError(Stage::ingest, "summary needs at least one valid row");
  std::vector<ColumnSummary> out;
  out.push_back(summarize_column(frame.response_name, frame.response));
  for (const auto& [name, col] : frame.covariates) out.push_back(summarize_column(name, col));
  return out;
}

// ---------------------------------------------------------------------------
// frame CSV

void write_frame_csv(const AlignedFrame& frame, std::ostream& out) {
  out << "timestamp," << frame.response_name;
  for (const auto& c : frame.covariates) out << ',' << c.first;
  out << ",valid\n";
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    out << format_rfc3339(frame.grid[i]) << ',' << csv::format_real(frame.response[i]);
    for (const auto& c : frame.covariates) out << ',' << csv::format_real(c.second[i]);
    out << ',' << int(frame.valid[i]) << '\n';
  }
}

void write_frame_csv(const AlignedFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(Stage::ingest, "cannot write " + path.string());
  write_frame_csv(frame, out);
}

AlignedFrame read_frame_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw EmptyInputError(Stage::ingest, "empty frame file");
  const auto header = csv::split_record(line);
  if (header.size() < 3 || csv::trim(header.front()) != "timestamp" ||
      csv::trim(header.back()) != "valid")
    throw SchemaError(Stage::ingest, "frame header must be timestamp,<response>,...,valid");
  AlignedFrame f;
  f.response_name = std::string(csv::trim(header[1]));
  for (std::size_t c = 2; c + 1 < header.size(); ++c)
    f.covariates.emplace_back(std::string(csv::trim(header[c])), Column{});
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_record(line);
    if (fields.size() != header.size())
      throw SchemaError(Stage::ingest, "frame line " + std::to_string(line_no) +
                                           " has wrong field count");
    const auto t = parse_rfc3339(fields[0]);
    if (!t) throw SchemaError(Stage::ingest, "bad timestamp on frame line " + std::to_string(line_no));
    f.grid.push_back(*t);
    f.response.push_back(csv::parse_real(fields[1]).value_or(kNaN));
    for (std::size_t c = 0; c < f.covariates.size(); ++c)
      f.covariates[c].second.push_back(csv::parse_real(fields[c + 2]).value_or(kNaN));
  }
  if (f.grid.empty()) throw EmptyInputError(Stage::ingest, "frame file has no rows");
  finalize_frame(f);
  return f;
}

AlignedFrame read_frame_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EmptyInputError(Stage::ingest, "cannot open " + path.string());
  return read_frame_csv(in);
}

}  // namespace wqgamm

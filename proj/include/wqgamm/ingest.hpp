#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wqgamm/time.hpp"

namespace wqgamm {

/// One variable's timestamped measurements with optional quality flags.
/// Timestamps are strictly increasing and values are finite; qc_flags is
/// either empty or one entry per timestamp (0 = pass, 1 = fail).
struct SensorSeries {
  std::string variable;
  std::string unit;
  std::vector<Instant> timestamps;
  std::vector<double> values;
  std::vector<std::uint8_t> qc_flags;

  std::size_t size() const noexcept { return timestamps.size(); }
  bool flagged(std::size_t i) const noexcept { return !qc_flags.empty() && qc_flags[i] != 0; }
};

struct ColumnSchema {
  std::string timestamp = "timestamp";
  std::string value = "value";
  /// Empty disables flag reading. A missing flag column is not an error.
  std::string qc_flag = "qc_flag";
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t unparseable = 0;
  std::size_t duplicates = 0;
};

struct LoadedSeries {
  SensorSeries series;
  LoadReport report;
};

/// Reads a single-variable CSV. Rows are sorted by time; later duplicates of a
/// timestamp are dropped. Throws SchemaError / EmptyInputError.
LoadedSeries load_series(const std::filesystem::path& path, const ColumnSchema& schema,
                         std::string variable, std::string unit = {});
LoadedSeries load_series(std::istream& in, const ColumnSchema& schema, std::string variable,
                         std::string unit = {}, std::string_view source = "<stream>");

/// Reads a wide CSV: a `timestamp` column, one column per variable and optional
/// `<variable>_qc` flag columns. Variables that end up empty are skipped.
std::vector<LoadedSeries> load_wide(const std::filesystem::path& path);
std::vector<LoadedSeries> load_wide(std::istream& in, std::string_view source = "<stream>");

/// Concatenates loaded parts of one variable, sorts by time and keeps the first
/// occurrence of each timestamp (parts earlier in the list win). Reports add up.
LoadedSeries merge_series(std::span<const LoadedSeries> parts);

void write_series_csv(const SensorSeries& series, const std::filesystem::path& path);

/// Canonical unit label for a known variable name, empty otherwise.
std::string_view unit_for(std::string_view variable);

struct Gap {
  Instant start;  ///< last grid instant before the gap
  Instant end;    ///< first grid instant after the gap
  std::size_t missing_rows = 0;
};

using Column = std::vector<double>;

/// Response and covariates on the 15-minute grid. Cells that are absent,
/// flagged or anomalous hold NaN; `valid` marks rows where every cell is finite.
struct AlignedFrame {
  std::vector<Instant> grid;
  std::string response_name = "nitrate";
  Column response;
  std::vector<std::pair<std::string, Column>> covariates;
  std::vector<std::uint8_t> valid;
  std::vector<Gap> gaps;

  std::size_t rows() const noexcept { return grid.size(); }
  std::size_t valid_count() const noexcept;
  bool has_covariate(std::string_view name) const noexcept;
  const Column& covariate(std::string_view name) const;
  std::vector<std::string> covariate_names() const;
  /// Values of `column` restricted to valid rows.
  std::vector<double> valid_values(std::string_view column) const;
  std::vector<double> valid_response() const;
  std::vector<std::size_t> valid_rows() const;
};

inline constexpr std::string_view kTimeColumn = "time_days";

struct AlignOptions {
  Duration tolerance = std::chrono::seconds(60);
};

/// Aligns covariates to the nitrate timestamps (snapped onto the 15-minute
/// lattice) taking the last observation at or before each grid instant within
/// the tolerance. A `turbidity` series becomes `log_turbidity` = log(x + 1).
/// Negative turbidity or conductance readings count as anomalous.
/// Appends the `time_days` column.
AlignedFrame align(const SensorSeries& nitrate, std::span<const SensorSeries> others,
                   const AlignOptions& options = {});

/// Inverse view of a frame as series (NaN cells become flagged entries), so
/// that align(frame_to_series(f)) reproduces f.
std::pair<SensorSeries, std::vector<SensorSeries>> frame_to_series(const AlignedFrame& frame);

struct ColumnSummary {
  std::string name;
  double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0;
  double whisker_low = 0, whisker_high = 0;  ///< extreme values within 1.5 IQR
  std::size_t count = 0;
  std::size_t missing = 0;
};

/// Type-7 quantile (linear interpolation of order statistics) of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

ColumnSummary summarize_column(std::string name, std::span<const double> values);
/// Summary of the response and every covariate over finite cells.
std::vector<ColumnSummary> summarize(const AlignedFrame& frame);

/// Wide CSV: timestamp, response, covariates..., valid. Reals use 17
/// significant digits so finite values round-trip exactly; NaN is empty.
void write_frame_csv(const AlignedFrame& frame, std::ostream& out);
void write_frame_csv(const AlignedFrame& frame, const std::filesystem::path& path);
AlignedFrame read_frame_csv(std::istream& in);
AlignedFrame read_frame_csv(const std::filesystem::path& path);

}  // namespace wqgamm

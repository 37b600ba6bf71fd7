#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wqgamm/gam.hpp"
#include "wqgamm/ingest.hpp"

namespace wqgamm::svg {

/// Box plots, one panel per column: box from Q1 to Q3, median bar, whiskers
/// to the most extreme values within 1.5 IQR, and min/max markers.
std::string boxplots(std::span<const ColumnSummary> columns, std::string_view title);

/// Stacked time-series panels for the response and covariates (time_days is
/// skipped) over `days` days from `start`. Lines break at missing cells.
/// Axis labels are UTC; the site-local offset is annotated.
std::string diel(const AlignedFrame& frame, Instant start, int days, double utc_offset_hours,
                 std::string_view title);

/// Smooth estimate (solid) with estimate +/- SE (dashed).
std::string smooth(const SmoothBand& band, std::string_view unit);

struct Bar {
  std::string label;
  double value = 0.0;
};

/// Horizontal bars in the given order.
std::string bars(std::span<const Bar> values, std::string_view title, std::string_view axis_label);

/// Multiples of a 1/2/5 x 10^k step that lie inside [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

}  // namespace wqgamm::svg

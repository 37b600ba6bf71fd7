#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace wqgamm {

using Duration = std::chrono::milliseconds;
/// UTC instant with millisecond resolution.
using Instant = std::chrono::sys_time<Duration>;

inline constexpr Duration kGridStep = std::chrono::minutes(15);

/// Parses RFC 3339 timestamps such as `2018-09-01T00:15:00Z`,
/// `2018-09-01T00:15Z` or `2018-09-01 00:15:00.250+00:00`.
/// Offsets other than UTC are applied. Returns nullopt when unparseable.
std::optional<Instant> parse_rfc3339(std::string_view text);

/// `YYYY-MM-DDTHH:MM:SSZ`, with `.mmm` appended when milliseconds are nonzero.
std::string format_rfc3339(Instant t);

/// Fractional days between two instants.
double days_between(Instant from, Instant to);

}  // namespace wqgamm

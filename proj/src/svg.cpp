#include "wqgamm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace wqgamm::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string tick_label(double v, double step) {
  char buf[32];
  if (std::abs(v) < 1e-12 * std::max(1.0, step)) v = 0.0;
  const int decimals = step >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
  std::snprintf(buf, sizeof buf, "%.*f", std::min(decimals, 8), v);
  return buf;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Padded, never empty.
  Range padded(double fraction = 0.05) const {
    Range r = *this;
    if (!std::isfinite(r.lo)) return {-1.0, 1.0};
    double span = r.hi - r.lo;
    if (span <= 0.0) span = std::max(1.0, std::abs(r.lo));
    r.lo -= fraction * span;
    r.hi += fraction * span;
    if (r.hi - r.lo <= 0.0) r.hi = r.lo + 1.0;
    return r;
  }
};

// Maps data coordinates into a pixel rectangle.
struct Frame {
  double left, top, width, height;
  Range x, y;

  double px(double v) const { return left + (v - x.lo) / (x.hi - x.lo) * width; }
  double py(double v) const { return top + height - (v - y.lo) / (y.hi - y.lo) * height; }
};

void open_document(std::ostringstream& o, double width, double height) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(width)
    << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height)
    << "\" fill=\"white\"/>\n";
}

void text(std::ostringstream& o, double x, double y, std::string_view s, const char* anchor = "middle",
          const char* extra = "") {
  o << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << '"' << extra
    << '>' << escape(s) << "</text>\n";
}

void line(std::ostringstream& o, double x1, double y1, double x2, double y2,
          const char* style = "stroke=\"black\"") {
  o << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\""
    << num(y2) << "\" " << style << "/>\n";
}

void y_axis(std::ostringstream& o, const Frame& f, std::span<const double> ticks) {
  line(o, f.left, f.top, f.left, f.top + f.height);
  const double step = ticks.size() > 1 ? ticks[1] - ticks[0] : 1.0;
  for (double t : ticks) {
    const double y = f.py(t);
    line(o, f.left - 4, y, f.left, y);
    text(o, f.left - 6, y + 4, tick_label(t, step), "end");
  }
}

void x_axis(std::ostringstream& o, const Frame& f, std::span<const double> ticks) {
  const double base = f.top + f.height;
  line(o, f.left, base, f.left + f.width, base);
  const double step = ticks.size() > 1 ? ticks[1] - ticks[0] : 1.0;
  for (double t : ticks) {
    const double x = f.px(t);
    line(o, x, base, x, base + 4);
    text(o, x, base + 16, tick_label(t, step));
  }
}

std::vector<double> ticks_inside(const Range& r, int target) {
  std::vector<double> t = nice_ticks(r.lo, r.hi, target);
  std::erase_if(t, [&](double v) { return v < r.lo - 1e-9 * (r.hi - r.lo) || v > r.hi + 1e-9 * (r.hi - r.lo); });
  return t;
}

// Polyline path; non-finite points break the line.
std::string path_data(std::span<const double> x, std::span<const double> y, const Frame& f) {
  std::string d;
  bool pen_down = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      pen_down = false;
      continue;
    }
    d += pen_down ? " L" : (d.empty() ? "M" : " M");
    d += num(f.px(x[i])) + "," + num(f.py(y[i]));
    pen_down = true;
  }
  return d;
}

std::string with_unit(std::string_view name, std::string_view unit) {
  std::string s(name);
  if (!unit.empty()) s += " (" + std::string(unit) + ")";
  return s;
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) return {lo};
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  const double first = std::ceil(lo / step - 1e-9) * step;
  for (int i = 0; i < 1000; ++i) {
    const double v = first + i * step;
    if (v > hi + 1e-9 * step) break;
    out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  }
  return out;
}

std::string boxplots(std::span<const ColumnSummary> columns, std::string_view title) {
  const int per_row = 3;
  const double panel_w = 200, panel_h = 220;
  const int rows = std::max<int>(1, (static_cast<int>(columns.size()) + per_row - 1) / per_row);
  const double width = per_row * panel_w, height = 40 + rows * panel_h;
  std::ostringstream o;
  open_document(o, width, height);
  text(o, width / 2, 22, title, "middle", " font-size=\"14\"");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const ColumnSummary& c = columns[i];
    const double ox = static_cast<double>(i % per_row) * panel_w;
    const double oy = 40 + static_cast<double>(i / per_row) * panel_h;
    Range r;
    r.add(c.min);
    r.add(c.max);
    Frame f{ox + 60, oy + 20, panel_w - 90, panel_h - 50, {0.0, 1.0}, r.padded()};
    text(o, ox + panel_w / 2, oy + 12, with_unit(c.name, unit_for(c.name)));
    y_axis(o, f, ticks_inside(f.y, 5));
    if (c.count == 0) {
      text(o, f.left + f.width / 2, f.top + f.height / 2, "no data");
      continue;
    }
    const double cx = f.left + f.width / 2, half = f.width / 4;
    const char* thin = "stroke=\"black\" stroke-width=\"1\"";
    line(o, cx, f.py(c.whisker_low), cx, f.py(c.q1), thin);
    line(o, cx, f.py(c.q3), cx, f.py(c.whisker_high), thin);
    line(o, cx - half / 2, f.py(c.whisker_low), cx + half / 2, f.py(c.whisker_low), thin);
    line(o, cx - half / 2, f.py(c.whisker_high), cx + half / 2, f.py(c.whisker_high), thin);
    o << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(f.py(c.q3)) << "\" width=\""
      << num(2 * half) << "\" height=\"" << num(f.py(c.q1) - f.py(c.q3))
      << "\" fill=\"#d9e6f2\" stroke=\"black\"/>\n";
    line(o, cx - half, f.py(c.median), cx + half, f.py(c.median), "stroke=\"black\" stroke-width=\"2\"");
    for (double v : {c.min, c.max})
      if (v < c.whisker_low || v > c.whisker_high)
        o << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(f.py(v))
          << "\" r=\"2.5\" fill=\"none\" stroke=\"black\"/>\n";
    text(o, ox + panel_w / 2, oy + panel_h - 10,
         "median " + tick_label(c.median, std::abs(c.median) >= 10 ? 1.0 : 0.01) + ", n = " +
             std::to_string(c.count));
  }
  o << "</svg>\n";
  return o.str();
}

std::string diel(const AlignedFrame& frame, Instant start, int days, double utc_offset_hours,
                 std::string_view title) {
  std::vector<std::pair<std::string, const Column*>> panels;
  panels.emplace_back(frame.response_name, &frame.response);
  for (const auto& [name, col] : frame.covariates)
    if (name != kTimeColumn) panels.emplace_back(name, &col);

  const Instant end = start + std::chrono::days(days);
  std::vector<double> hours;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < frame.grid.size(); ++i) {
    if (frame.grid[i] < start || frame.grid[i] >= end) continue;
    rows.push_back(i);
    hours.push_back(std::chrono::duration<double, std::ratio<3600>>(frame.grid[i] - start).count());
  }
  // Break lines across absent lattice slots.
  std::vector<double> xs;
  std::vector<std::size_t> source;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k > 0 && frame.grid[rows[k]] - frame.grid[rows[k - 1]] > kGridStep) {
      xs.push_back(std::numeric_limits<double>::quiet_NaN());
      source.push_back(static_cast<std::size_t>(-1));
    }
    xs.push_back(hours[k]);
    source.push_back(rows[k]);
  }

  const double width = 720, panel_h = 120, top = 40;
  const double height = top + panels.size() * panel_h + 50;
  std::ostringstream o;
  open_document(o, width, height);
  text(o, width / 2, 22, title, "middle", " font-size=\"14\"");
  const Range xr{0.0, 24.0 * days};
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Column& col = *panels[p].second;
    std::vector<double> ys(xs.size());
    Range yr;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      ys[k] = source[k] == static_cast<std::size_t>(-1) ? std::numeric_limits<double>::quiet_NaN()
                                                          : col[source[k]];
      yr.add(ys[k]);
    }
    Frame f{80, top + p * panel_h + 10, width - 110, panel_h - 30, xr, yr.padded()};
    text(o, 14, f.top + f.height / 2, with_unit(panels[p].first, unit_for(panels[p].first)), "middle",
         (" transform=\"rotate(-90 14 " + num(f.top + f.height / 2) + ")\"").c_str());
    y_axis(o, f, ticks_inside(f.y, 3));
    line(o, f.left, f.top + f.height, f.left + f.width, f.top + f.height);
    for (int d = 0; d <= days; ++d) {
      const double x = f.px(24.0 * d);
      line(o, x, f.top, x, f.top + f.height, "stroke=\"#cccccc\" stroke-dasharray=\"2,3\"");
    }
    o << "<path d=\"" << path_data(xs, ys, f) << "\" fill=\"none\" stroke=\"#1f4e79\" stroke-width=\"1\"/>\n";
    if (p + 1 == panels.size()) {
      for (int d = 0; d <= days; ++d) {
        const Instant t = start + std::chrono::days(d);
        const auto dp = std::chrono::floor<std::chrono::days>(t);
        const std::chrono::year_month_day ymd{dp};
        const auto tod = std::chrono::hh_mm_ss(std::chrono::floor<std::chrono::minutes>(t - dp));
        char buf[32];
        std::snprintf(buf, sizeof buf, "%02u-%02u %02d:%02d", static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()), static_cast<int>(tod.hours().count()),
                      static_cast<int>(tod.minutes().count()));
        text(o, f.px(24.0 * d), f.top + f.height + 16, buf);
      }
      char note[80];
      std::snprintf(note, sizeof note, "time (UTC); site local time = UTC%+.1f h", utc_offset_hours);
      text(o, f.left + f.width / 2, f.top + f.height + 36, note);
    }
  }
  o << "</svg>\n";
  return o.str();
}

std::string smooth(const SmoothBand& band, std::string_view unit) {
  const double width = 480, height = 360;
  std::vector<double> lower(band.x.size()), upper(band.x.size());
  Range xr, yr;
  for (std::size_t i = 0; i < band.x.size(); ++i) {
    lower[i] = band.estimate[i] - band.se[i];
    upper[i] = band.estimate[i] + band.se[i];
    xr.add(band.x[i]);
    yr.add(lower[i]);
    yr.add(upper[i]);
  }
  if (!std::isfinite(xr.lo)) xr = {0.0, 1.0};
  if (xr.hi <= xr.lo) xr.hi = xr.lo + 1.0;
  Frame f{70, 30, width - 95, height - 85, xr, yr.padded()};
  std::ostringstream o;
  open_document(o, width, height);
  text(o, width / 2, 18, "s(" + band.covariate + ")", "middle", " font-size=\"13\"");
  y_axis(o, f, ticks_inside(f.y, 5));
  x_axis(o, f, ticks_inside(f.x, 5));
  if (f.y.lo < 0.0 && f.y.hi > 0.0)
    line(o, f.left, f.py(0.0), f.left + f.width, f.py(0.0), "stroke=\"#bbbbbb\"");
  o << "<path d=\"" << path_data(band.x, band.estimate, f)
    << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  for (const auto* side : {&lower, &upper})
    o << "<path d=\"" << path_data(band.x, *side, f)
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
  text(o, f.left + f.width / 2, height - 18, with_unit(band.covariate, unit));
  text(o, 16, f.top + f.height / 2, "s(" + band.covariate + ")", "middle",
       (" transform=\"rotate(-90 16 " + num(f.top + f.height / 2) + ")\"").c_str());
  o << "</svg>\n";
  return o.str();
}

std::string bars(std::span<const Bar> values, std::string_view title, std::string_view axis_label) {
  const double bar_h = 22, top = 40, left = 130, plot_w = 420;
  const double height = top + values.size() * (bar_h + 8) + 50, width = left + plot_w + 60;
  Range r{0.0, 0.0};
  for (const auto& b : values) r.add(b.value);
  if (r.hi <= r.lo) r.hi = r.lo + 1.0;
  Frame f{left, top, plot_w, values.size() * (bar_h + 8), r, {0.0, 1.0}};
  std::ostringstream o;
  open_document(o, width, height);
  text(o, width / 2, 22, title, "middle", " font-size=\"14\"");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double y = top + i * (bar_h + 8) + 4;
    const double x0 = f.px(std::min(0.0, values[i].value));
    const double x1 = f.px(std::max(0.0, values[i].value));
    o << "<rect x=\"" << num(x0) << "\" y=\"" << num(y) << "\" width=\"" << num(x1 - x0)
      << "\" height=\"" << num(bar_h) << "\" fill=\"#7a9cc6\" stroke=\"black\"/>\n";
    text(o, left - 8, y + bar_h * 0.7, values[i].label, "end");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", values[i].value);
    text(o, x1 + 6, y + bar_h * 0.7, buf, "start");
  }
  const double base = f.top + f.height;
  line(o, f.px(0.0), top, f.px(0.0), base);
  x_axis(o, f, ticks_inside(f.x, 5));
  text(o, left + plot_w / 2, base + 36, axis_label);
  o << "</svg>\n";
  return o.str();
}

}  // namespace wqgamm::svg

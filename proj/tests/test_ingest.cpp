#include <doctest.h>

#include <cstring>
#include <numeric>

#include <cmath>
#include <random>
#include <sstream>

#include "wqgamm/errors.hpp"
#include "wqgamm/ingest.hpp"

using namespace wqgamm;
using namespace std::chrono_literals;

namespace {

Instant at(const char* text) { return *parse_rfc3339(text); }

SensorSeries make_series(std::string name, std::vector<Instant> t, std::vector<double> v,
                         std::vector<std::uint8_t> flags = {}) {
  SensorSeries s;
  s.variable = std::move(name);
  s.timestamps = std::move(t);
  s.values = std::move(v);
  s.qc_flags = std::move(flags);
  return s;
}

LoadedSeries load_text(const std::string& text) {
  std::istringstream in(text);
  return load_series(in, ColumnSchema{}, "nitrate");
}

}  // namespace

TEST_CASE("rfc3339 parsing and formatting") {
  CHECK(parse_rfc3339("2018-09-01T00:15:00Z") == Instant{std::chrono::sys_days{std::chrono::year{2018} / 9 / 1}} + 15min);
  CHECK(parse_rfc3339("2018-09-01T00:15Z") == parse_rfc3339("2018-09-01 00:15:00Z"));
  CHECK(parse_rfc3339("2018-09-01T02:15:00+02:00") == parse_rfc3339("2018-09-01T00:15:00Z"));
  CHECK(parse_rfc3339("2018-09-01T00:15:00.250Z").has_value());
  CHECK_FALSE(parse_rfc3339("2018-13-01T00:00:00Z").has_value());
  CHECK_FALSE(parse_rfc3339("not a time").has_value());
  CHECK(format_rfc3339(at("2019-12-31T23:45:00Z")) == "2019-12-31T23:45:00Z");
  CHECK(format_rfc3339(at("2019-12-31T23:45:00.5Z")) == "2019-12-31T23:45:00.500Z");
}

TEST_CASE("load_series sorts a three-row file") {
  const auto r = load_text(
      "timestamp,value\n"
      "2018-09-01T00:30:00Z,3\n"
      "2018-09-01T00:00:00Z,1\n"
      "2018-09-01T00:15:00Z,2\n");
  REQUIRE(r.series.size() == 3);
  CHECK(r.series.values == std::vector<double>{1, 2, 3});
  CHECK(std::is_sorted(r.series.timestamps.begin(), r.series.timestamps.end()));
  CHECK(r.series.qc_flags.empty());
}

TEST_CASE("flagged rows are kept with their flag") {
  const auto r = load_text(
      "timestamp,value,qc_flag\n"
      "2018-09-01T00:00:00Z,1,0\n"
      "2018-09-01T00:15:00Z,2,1\n");
  REQUIRE(r.series.size() == 2);
  CHECK_FALSE(r.series.flagged(0));
  CHECK(r.series.flagged(1));
}

TEST_CASE("duplicate timestamps keep the first row and are counted") {
  const auto r = load_text(
      "timestamp,value\n"
      "2018-09-01T00:00:00Z,1\n"
      "2018-09-01T00:15:00Z,2\n"
      "2018-09-01T00:15:00Z,99\n"
      "2018-09-01T00:30:00Z,3\n");
  CHECK(r.series.values == std::vector<double>{1, 2, 3});
  CHECK(r.report.duplicates == 1);
  CHECK(r.report.rows_read == 4);
}

TEST_CASE("unparseable rows are dropped and counted") {
  const auto r = load_text(
      "timestamp,value\n"
      "2018-09-01T00:00:00Z,1\n"
      "garbage,2\n"
      "2018-09-01T00:30:00Z,NA\n"
      "2018-09-01T00:45:00Z,4\n");
  CHECK(r.series.size() == 2);
  CHECK(r.report.unparseable == 2);
}

TEST_CASE("load_series errors") {
  CHECK_THROWS_AS(load_text("time,value\n2018-09-01T00:00:00Z,1\n"), SchemaError);
  CHECK_THROWS_AS(load_text("timestamp,reading\n2018-09-01T00:00:00Z,1\n"), SchemaError);
  CHECK_THROWS_AS(load_text("timestamp,value\nbad,1\n"), EmptyInputError);
  CHECK_THROWS_AS(load_text(""), EmptyInputError);
  try {
    load_text("timestamp,value\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("[ingest]") == 0);
  }
}

TEST_CASE("wide files split into series with optional flag columns") {
  std::istringstream in(
      "timestamp,nitrate,nitrate_qc,temp\n"
      "2018-09-01T00:00:00Z,1.5,0,10\n"
      "2018-09-01T00:15:00Z,1.7,1,\n");
  const auto parts = load_wide(in);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].series.variable == "nitrate");
  CHECK(parts[0].series.flagged(1));
  CHECK(parts[1].series.variable == "temp");
  CHECK(parts[1].series.size() == 1);
}

TEST_CASE("merge_series keeps the earliest part on overlap") {
  LoadedSeries a{make_series("temp", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z")}, {1, 2}), {}};
  LoadedSeries b{make_series("temp", {at("2018-09-01T00:15:00Z"), at("2018-09-01T00:30:00Z")}, {9, 3}), {}};
  const LoadedSeries parts[] = {b, a};
  const auto m = merge_series(parts);
  CHECK(m.series.values == std::vector<double>{1, 9, 3});
  CHECK(m.report.duplicates == 1);
}

TEST_CASE("align picks exact matches from a faster series") {
  const auto n = make_series("nitrate", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z")}, {5, 6});
  std::vector<Instant> t;
  std::vector<double> v;
  for (int m = -5; m <= 20; ++m) {
    t.push_back(at("2018-09-01T00:00:00Z") + std::chrono::minutes(m));
    v.push_back(100.0 + m);
  }
  const SensorSeries others[] = {make_series("do", t, v)};
  const AlignedFrame f = align(n, others);
  REQUIRE(f.rows() == 2);
  CHECK(f.covariate("do")[0] == 100.0);
  CHECK(f.covariate("do")[1] == 115.0);
  CHECK(f.valid_count() == 2);
  CHECK(f.covariate(kTimeColumn)[1] == doctest::Approx(15.0 / 1440.0));
}

TEST_CASE("turbidity becomes log(x + 1)") {
  const auto n = make_series("nitrate", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z")}, {5, 6});
  const SensorSeries others[] = {
      make_series("turbidity", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z")}, {0.0, std::exp(2.0) - 1.0})};
  const AlignedFrame f = align(n, others);
  CHECK_FALSE(f.has_covariate("turbidity"));
  CHECK(f.covariate("log_turbidity")[0] == 0.0);
  CHECK(f.covariate("log_turbidity")[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("tolerance window for the last observation at or before a grid instant") {
  const auto n = make_series("nitrate", {at("2018-09-01T00:15:00Z")}, {5});
  SUBCASE("30 s before is inside 60 s") {
    const SensorSeries others[] = {make_series("do", {at("2018-09-01T00:14:30Z")}, {8.0})};
    const AlignedFrame f = align(n, others);
    CHECK(f.covariate("do")[0] == 8.0);
    CHECK(f.valid_count() == 1);
  }
  const auto two = make_series("nitrate", {at("2018-09-01T00:15:00Z"), at("2018-09-01T00:30:00Z")}, {5, 6});
  SUBCASE("90 s before is outside") {
    const SensorSeries others[] = {
        make_series("do", {at("2018-09-01T00:13:30Z"), at("2018-09-01T00:30:00Z")}, {8.0, 9.0})};
    const AlignedFrame f = align(two, others);
    CHECK(std::isnan(f.covariate("do")[0]));
    CHECK(f.valid == std::vector<std::uint8_t>{0, 1});
  }
  SUBCASE("observations after the grid instant are never used") {
    const SensorSeries others[] = {
        make_series("do", {at("2018-09-01T00:15:01Z"), at("2018-09-01T00:30:00Z")}, {8.0, 9.0})};
    CHECK(std::isnan(align(two, others).covariate("do")[0]));
  }
  SUBCASE("a frame without any valid row is empty") {
    const SensorSeries others[] = {make_series("do", {at("2018-09-01T00:13:30Z")}, {8.0})};
    CHECK_THROWS_AS(align(n, others), EmptyInputError);
  }
}

TEST_CASE("exhaustive tolerance check against a direct scan") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> offset(-200, 200);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Instant> grid;
    for (int i = 0; i < 8; ++i) grid.push_back(at("2018-09-01T00:00:00Z") + 15min * i);
    std::vector<Instant> t;
    std::vector<double> v;
    for (int i = 0; i < 8; ++i) {
      t.push_back(grid[i] + std::chrono::seconds(offset(rng)));
      v.push_back(i);
    }
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
    std::vector<Instant> ts;
    std::vector<double> vs;
    for (auto i : order) {
      if (!ts.empty() && ts.back() == t[i]) continue;
      ts.push_back(t[i]);
      vs.push_back(v[i]);
    }
    const SensorSeries others[] = {make_series("do", ts, vs)};
    const auto n = make_series("nitrate", grid, std::vector<double>(8, 1.0));
    const Duration tol = std::chrono::seconds(60 + trial);
    AlignedFrame f;
    try {
      f = align(n, others, AlignOptions{tol});
    } catch (const EmptyInputError&) {
      continue;
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double expected = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t k = 0; k < ts.size(); ++k)
        if (ts[k] <= grid[g] && grid[g] - ts[k] <= tol) expected = vs[k];
      const double got = f.covariate("do")[g];
      if (std::isnan(expected))
        CHECK(std::isnan(got));
      else
        CHECK(got == expected);
    }
  }
}

TEST_CASE("nitrate timestamps off the lattice are reported") {
  const auto n = make_series("nitrate", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:07:00Z")}, {1, 2});
  try {
    align(n, {});
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("2018-09-01T00:07:00Z") != std::string::npos);
  }
  const auto skewed = make_series("nitrate", {at("2018-09-01T00:00:20Z"), at("2018-09-01T00:14:50Z")}, {1, 2});
  const AlignedFrame f = align(skewed, {});
  CHECK(f.grid[0] == at("2018-09-01T00:00:00Z"));
  CHECK(f.grid[1] == at("2018-09-01T00:15:00Z"));
}

TEST_CASE("flags, anomalies and empty frames") {
  const auto n = make_series("nitrate", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z"), at("2018-09-01T00:30:00Z")},
                             {1, 2, 3}, {0, 1, 0});
  const SensorSeries others[] = {make_series("cond", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z"), at("2018-09-01T00:30:00Z")},
                                             {100, 100, -1})};
  const AlignedFrame f = align(n, others);
  CHECK(f.valid == std::vector<std::uint8_t>{1, 0, 0});
  const auto all_bad = make_series("nitrate", {at("2018-09-01T00:00:00Z")}, {1}, {1});
  CHECK_THROWS_AS(align(all_bad, {}), EmptyInputError);
}

TEST_CASE("gaps are recorded") {
  const auto n = make_series("nitrate", {at("2018-09-01T00:00:00Z"), at("2018-09-01T00:15:00Z"), at("2018-09-01T01:15:00Z")}, {1, 2, 3});
  const AlignedFrame f = align(n, {});
  REQUIRE(f.gaps.size() == 1);
  CHECK(f.gaps[0].missing_rows == 3);
  CHECK(f.gaps[0].start == at("2018-09-01T00:15:00Z"));
  CHECK(f.gaps[0].end == at("2018-09-01T01:15:00Z"));
}

TEST_CASE("summaries use type-7 quantiles") {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  const auto s = summarize_column("x", v);
  CHECK(s.median == 3.0);
  CHECK(s.mean == 3.0);
  CHECK(s.q1 == 2.0);
  CHECK(s.q3 == 4.0);
  const std::vector<double> c = {7, 7, 7};
  const auto k = summarize_column("c", c);
  CHECK(k.q3 - k.q1 == 0.0);
  const std::vector<double> four = {1, 2, 3, 4};
  CHECK(summarize_column("f", four).q1 == doctest::Approx(1.75));
}

namespace {

AlignedFrame random_frame(std::mt19937_64& rng, double flag_rate, bool gaps) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Instant t0 = at("2019-01-01T00:00:00Z");
  std::vector<Instant> t;
  for (int i = 0; i < 120; ++i) {
    if (gaps && u(rng) < 0.1) continue;
    t.push_back(t0 + 15min * i);
  }
  auto flags = [&] {
    std::vector<std::uint8_t> f(t.size());
    for (auto& x : f) x = u(rng) < flag_rate;
    return f;
  };
  auto values = [&](double lo, double hi) {
    std::vector<double> v(t.size());
    for (auto& x : v) x = lo + (hi - lo) * u(rng);
    return v;
  };
  const auto n = make_series("nitrate", t, values(1, 10), flags());
  std::vector<SensorSeries> others = {make_series("cond", t, values(100, 500), flags()),
                                      make_series("turbidity", t, values(0, 30), flags()),
                                      make_series("temp", t, values(0, 25), flags())};
  return align(n, others);
}

}  // namespace

TEST_CASE("align is idempotent through frame_to_series") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const AlignedFrame f = random_frame(rng, 0.1, true);
    const auto [n, others] = frame_to_series(f);
    AlignedFrame g = align(n, others);
    REQUIRE(g.rows() == f.rows());
    CHECK(g.grid == f.grid);
    CHECK(g.valid == f.valid);
    REQUIRE(g.covariates.size() == f.covariates.size());
    for (std::size_t c = 0; c < f.covariates.size(); ++c) {
      CHECK(g.covariates[c].first == f.covariates[c].first);
      for (std::size_t i = 0; i < f.rows(); ++i) {
        const double a = f.covariates[c].second[i], b = g.covariates[c].second[i];
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
      }
    }
  }
}

TEST_CASE("no valid row carries a value from a flagged observation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Instant t0 = at("2019-01-01T00:00:00Z");
    std::vector<Instant> t;
    std::vector<double> nv, cv;
    std::vector<std::uint8_t> nf, cf;
    for (int i = 0; i < 60; ++i) {
      t.push_back(t0 + 15min * i);
      nv.push_back(i);
      cv.push_back(1000 + i);
      nf.push_back(u(rng) < 0.2);
      cf.push_back(u(rng) < 0.2);
    }
    const SensorSeries others[] = {make_series("cond", t, cv, cf)};
    AlignedFrame f;
    try {
      f = align(make_series("nitrate", t, nv, nf), others);
    } catch (const EmptyInputError&) {
      continue;
    }
    for (std::size_t i = 0; i < f.rows(); ++i) {
      if (!f.valid[i]) continue;
      const auto k = static_cast<std::size_t>(f.response[i]);
      CHECK_FALSE(nf[k]);
      CHECK_FALSE(cf[static_cast<std::size_t>(f.covariate("cond")[i] - 1000)]);
    }
  }
}

TEST_CASE("valid rows never exceed the nitrate rows; equality when clean") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const AlignedFrame dirty = random_frame(rng, 0.05, true);
    CHECK(dirty.valid_count() <= dirty.rows());
    const AlignedFrame clean = random_frame(rng, 0.0, false);
    CHECK(clean.valid_count() == clean.rows());
  }
}

TEST_CASE("log turbidity preserves order") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 500.0);
  std::vector<Instant> t;
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) {
    t.push_back(at("2019-01-01T00:00:00Z") + 15min * i);
    v.push_back(u(rng));
  }
  const SensorSeries others[] = {make_series("turbidity", t, v)};
  const AlignedFrame f = align(make_series("nitrate", t, std::vector<double>(t.size(), 1.0)), others);
  const Column& lt = f.covariate("log_turbidity");
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t.size(); ++j)
      if (v[i] < v[j]) CHECK(lt[i] < lt[j]);
}

TEST_CASE("frame CSV round trip is bit exact") {
  std::mt19937_64 rng(4);
  const AlignedFrame f = random_frame(rng, 0.1, true);
  std::stringstream buf;
  write_frame_csv(f, buf);
  const AlignedFrame g = read_frame_csv(buf);
  CHECK(g.grid == f.grid);
  CHECK(g.valid == f.valid);
  CHECK(g.gaps.size() == f.gaps.size());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    CHECK(std::memcmp(&f.response[i], &g.response[i], sizeof(double)) == 0);
    for (std::size_t c = 0; c < f.covariates.size(); ++c) {
      const double a = f.covariates[c].second[i], b = g.covariates[c].second[i];
      if (std::isnan(a))
        CHECK(std::isnan(b));
      else
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
  }
}

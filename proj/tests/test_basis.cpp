#include <doctest.h>

#include <cstring>
#include <numeric>

#include <random>

#include "oracles.hpp"
#include "wqgamm/basis.hpp"
#include "wqgamm/errors.hpp"

using namespace wqgamm;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST_CASE("basis shape and centering") {
  const auto x = uniform(500, 3.0, 9.0, 1);
  const BasisExpansion b = tprs_basis(x, SmoothSpec{"x", 7});
  CHECK(b.design.rows() == 500);
  CHECK(b.design.cols() == 6);
  CHECK(b.penalty.rows() == 6);
  CHECK(b.basis_dim() == 7);
  for (Eigen::Index j = 0; j < b.design.cols(); ++j) CHECK(std::abs(b.design.col(j).sum()) < 1e-9 * 500);
  CHECK((b.penalty - b.penalty.transpose()).norm() < 1e-10 * b.penalty.norm());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.penalty);
  CHECK(es.eigenvalues().minCoeff() > -1e-9 * es.eigenvalues().maxCoeff());
  // exactly one unpenalized direction: the linear trend
  int null = 0;
  for (auto v : es.eigenvalues()) null += std::abs(v) < 1e-9 * es.eigenvalues().maxCoeff();
  CHECK(null == 1);
  CHECK(b.x_min == doctest::Approx(*std::min_element(x.begin(), x.end())));
  CHECK(b.x_max == doctest::Approx(*std::max_element(x.begin(), x.end())));
}

TEST_CASE("basis rows reproduce the design") {
  const auto x = uniform(300, -1.0, 1.0, 2);
  const BasisExpansion b = tprs_basis(x, SmoothSpec{"x", 6});
  const Eigen::MatrixXd r = b.rows(x);
  CHECK((r - b.design).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("too few distinct values") {
  const std::vector<double> x = {1, 2, 3, 1, 2, 3};
  CHECK_THROWS_AS(tprs_basis(x, SmoothSpec{"x", 7}), Error);
}

TEST_CASE("penalty equals the integrated squared second derivative") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double lo = -2.0 + seed, hi = lo + 0.5 * seed;
    const auto x = uniform(400, lo, hi, seed);
    const BasisExpansion b = tprs_basis(x, SmoothSpec{"x", 8});
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> nd;
    Eigen::VectorXd c(b.columns());
    for (auto& v : c) v = nd(rng);
    const double quad = c.dot(b.penalty * c) / b.penalty_scale;
    auto f = [&](double t) {
      const double p[1] = {t};
      return evaluate_smooth(b, c, p, true)[0];
    };
    const double h = (b.x_max - b.x_min) * 1e-3;
    const double integral = oracle::simpson(
        [&](double t) {
          const double d2 = oracle::second_derivative(f, t, h);
          return d2 * d2;
        },
        b.x_min, b.x_max, 2000);
    CHECK(quad == doctest::Approx(integral).epsilon(0.05));
  }
}

TEST_CASE("smooth is linear outside the knot range") {
  const auto x = uniform(300, 0.0, 1.0, 3);
  const BasisExpansion b = tprs_basis(x, SmoothSpec{"x", 7});
  Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(b.columns(), 1.0, 2.0);
  const double far[3] = {b.x_max + 0.5, b.x_max + 1.0, b.x_max + 1.5};
  const Eigen::VectorXd v = evaluate_smooth(b, c, far, true);
  CHECK(v[2] - v[1] == doctest::Approx(v[1] - v[0]).epsilon(1e-8));
  CHECK_THROWS_AS(evaluate_smooth(b, c, far, false), Error);
}

TEST_CASE("knot subsampling caps the knot count") {
  const auto x = uniform(3000, 0.0, 1.0, 4);
  const BasisExpansion b = tprs_basis(x, SmoothSpec{"x", 7}, 250);
  CHECK(b.knots.size() == 250);
  CHECK(b.knots.minCoeff() == doctest::Approx(b.x_min));
  CHECK(b.knots.maxCoeff() == doctest::Approx(b.x_max));
}

TEST_CASE("lanczos agrees with a dense eigensolver") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const int n = 300;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = nd(rng) / (1.0 + std::abs(i - j));
  const auto [vals, vecs] = top_magnitude_eigenpairs(a, 6);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  std::vector<double> ref(es.eigenvalues().data(), es.eigenvalues().data() + n);
  std::sort(ref.begin(), ref.end(), [](double p, double q) { return std::abs(p) > std::abs(q); });
  for (int k = 0; k < 6; ++k) {
    CHECK(vals[k] == doctest::Approx(ref[k]).epsilon(1e-8));
    CHECK((a * vecs.col(k) - vals[k] * vecs.col(k)).norm() < 1e-6 * std::abs(vals[k]));
  }
}

TEST_CASE("vif matches the brute-force oracle on correlated designs") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 4, n = 100 + 10 * trial;
    std::vector<std::vector<double>> cols(k, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      const double common = nd(rng);
      for (int j = 0; j < k; ++j) cols[j][i] = 0.3 * j + (0.2 + 0.3 * j) * common + nd(rng);
    }
    std::vector<NamedColumn> named;
    for (int j = 0; j < k; ++j) named.push_back({"c" + std::to_string(j), cols[j]});
    const auto got = vif(named);
    const auto ref = oracle::vif(cols);
    for (int j = 0; j < k; ++j) CHECK(std::abs(got[j].vif - ref[j]) < 1e-8 * std::max(1.0, ref[j]));
  }
}

TEST_CASE("duplicated column gives the infinite sentinel") {
  const auto a = uniform(200, 0.0, 1.0, 7), b = uniform(200, 0.0, 1.0, 8);
  const NamedColumn cols[] = {{"a", a}, {"b", b}, {"a2", a}};
  const auto v = vif(cols);
  CHECK(v[0].vif == kInfiniteVif);
  CHECK(v[2].vif == kInfiniteVif);
  CHECK(std::isfinite(v[1].vif));
}

TEST_CASE("constant column is degenerate") {
  const auto a = uniform(50, 0.0, 1.0, 9);
  const NamedColumn cols[] = {{"a", a}, {"k", std::vector<double>(50, 3.0)}};
  CHECK_THROWS_AS(vif(cols), DegenerateColumnError);
}

TEST_CASE("vif screening drops the worst column first and stops below the threshold") {
  const auto a = uniform(300, 0.0, 1.0, 10), c = uniform(300, 0.0, 1.0, 11);
  std::vector<double> b = a;
  const auto jitter = uniform(300, -0.01, 0.01, 12);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += jitter[i];
  const NamedColumn cols[] = {{"a", a}, {"b", b}, {"c", c}};
  const auto s = vif_screen(cols, 6.0);
  REQUIRE(s.size() == 3);
  int excluded = 0;
  for (const auto& e : s) excluded += e.excluded;
  CHECK(excluded == 1);
  CHECK_FALSE(s[2].excluded);
  CHECK((s[0].excluded || s[1].excluded));
  for (const auto& e : s)
    if (!e.excluded) CHECK(e.final_vif < 6.0);
}

TEST_CASE("vif screening with threshold one keeps a single column") {
  const auto a = uniform(300, 0.0, 1.0, 13), b = uniform(300, 0.0, 1.0, 14), c = uniform(300, 0.0, 1.0, 15);
  const NamedColumn cols[] = {{"a", a}, {"b", b}, {"c", c}};
  const auto s = vif_screen(cols, 1.0);
  int kept = 0;
  for (const auto& e : s) kept += !e.excluded;
  CHECK(kept == 1);
}

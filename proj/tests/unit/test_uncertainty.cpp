#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "expressions.hpp"
#include "sdem/errors.hpp"
#include "sdem/sde_analysis.hpp"
#include "sdem/uncertainty.hpp"

using namespace sdem;
using doctest::Approx;

TEST_CASE("lift") {
  auto a = UncertainValue::lift(1.0, 0.0);
  CHECK(a.value() == 1.0);
  CHECK(a.sigma() == 0.0);
  CHECK(a.is_exact());

  auto b = UncertainValue::lift(100e-6, 0.14e-6);
  CHECK(b.relative_sigma() == Approx(0.0014).epsilon(1e-12));

  CHECK_THROWS_AS(UncertainValue::lift(1.0, -0.1), InvalidArgument);
  CHECK_THROWS_AS(UncertainValue::lift(1.0, std::nan("")), InvalidArgument);
}

TEST_CASE("x - x is exact") {
  auto x = UncertainValue::lift(3.0, 0.3);
  auto d = x - x;
  CHECK(d.value() == 0.0);
  CHECK(d.sigma() == 0.0);
  auto q = x / x;
  CHECK(q.value() == 1.0);
  CHECK(q.sigma() == Approx(0.0).epsilon(1e-15));
}

TEST_CASE("independent product adds relative sigmas in quadrature") {
  auto a = UncertainValue::lift(1.0, 0.01);
  auto b = UncertainValue::lift(1.0, 0.02);
  CHECK((a * b).relative_sigma() == Approx(std::sqrt(0.01 * 0.01 + 0.02 * 0.02)).epsilon(1e-12));
  CHECK((a * b).relative_sigma() == Approx(0.02236).epsilon(1e-4));
  CHECK((a / b).relative_sigma() == Approx(0.02236).epsilon(1e-4));
}

TEST_CASE("sum of two independent values against sampling") {
  auto a = UncertainValue::lift(5.0, 0.1);
  auto b = UncertainValue::lift(5.0, 0.1);
  auto s = a + b;
  CHECK(s.value() == 10.0);
  CHECK(s.sigma() == Approx(0.1414).epsilon(1e-3));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(5.0, 0.1);
  double m = 0, m2 = 0;
  const int draws = 1000000;
  for (int i = 1; i <= draws; ++i) {
    const double x = n(rng) + n(rng);
    const double d = x - m;
    m += d / i;
    m2 += d * (x - m);
  }
  CHECK(std::sqrt(m2 / (draws - 1)) == Approx(s.sigma()).epsilon(0.01));
}

TEST_CASE("domain errors") {
  auto x = UncertainValue::lift(1.0, 0.1);
  auto zero = UncertainValue::lift(0.0, 0.1);
  auto neg = UncertainValue::lift(-1.0, 0.1);
  CHECK_THROWS_AS(x / zero, DomainError);
  CHECK_THROWS_AS(x / 0.0, DomainError);
  CHECK_THROWS_AS(log(zero), DomainError);
  CHECK_THROWS_AS(log(neg), DomainError);
  CHECK_THROWS_AS(sqrt(neg), DomainError);
  CHECK_THROWS_AS(pow(neg, 0.5), DomainError);
  try {
    (void)log(neg);
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("elementary functions") {
  auto x = UncertainValue::lift(2.0, 0.02);
  CHECK(exp(x).sigma() == Approx(std::exp(2.0) * 0.02));
  CHECK(log(x).sigma() == Approx(0.01));
  CHECK(sqrt(x).relative_sigma() == Approx(0.005));
  CHECK(pow(x, 3.0).relative_sigma() == Approx(0.03));
  auto y = UncertainValue::lift(1.5, 0.01);
  auto p = pow(x, y);
  CHECK(p.value() == Approx(std::pow(2.0, 1.5)));
  const double dx = 1.5 * std::pow(2.0, 0.5) * 0.02;
  const double dy = std::pow(2.0, 1.5) * std::log(2.0) * 0.01;
  CHECK(p.sigma() == Approx(std::hypot(dx, dy)));
}

TEST_CASE("covariance bookkeeping") {
  auto a = UncertainValue::lift(2.0, 0.1);
  auto b = UncertainValue::lift(3.0, 0.2);
  auto u = a + b;
  auto v = a - b;
  CHECK(covariance(u, v) == Approx(0.01 - 0.04));
  CHECK(correlation(a, a) == Approx(1.0));
  CHECK(correlation(a, b) == 0.0);
  std::vector<UncertainValue> vals{u, v};
  auto c = covariance_matrix(vals);
  CHECK(c(0, 0) == Approx(0.05));
  CHECK(c(0, 1) == Approx(-0.03));
  CHECK(c(1, 0) == Approx(-0.03));
}

TEST_CASE("correlated values reproduce their covariance") {
  Eigen::MatrixXd cov(3, 3);
  cov << 4e-4, 1e-4, -5e-5, 1e-4, 9e-4, 2e-4, -5e-5, 2e-4, 1e-4;
  std::vector<double> vals{1.0, 2.0, 3.0};
  auto xs = correlated(vals, cov);
  REQUIRE(xs.size() == 3);
  auto back = covariance_matrix(xs);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(back(i, j) == Approx(cov(i, j)).epsilon(1e-10));

  Eigen::MatrixXd singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;
  std::vector<double> two{0.0, 0.0};
  auto ys = correlated(two, singular);
  CHECK((ys[0] - ys[1]).sigma() == Approx(0.0).scale(1.0));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(correlated(two, bad), InvalidArgument);
  CHECK_THROWS_AS(correlated(vals, bad), InvalidArgument);
}

TEST_CASE("mean carries correlations") {
  auto a = UncertainValue::lift(1.0, 0.1);
  std::vector<UncertainValue> same{a, a, a};
  CHECK(mean(same).sigma() == Approx(0.1));
  std::vector<UncertainValue> indep{UncertainValue::lift(1.0, 0.1), UncertainValue::lift(1.0, 0.1),
                                    UncertainValue::lift(1.0, 0.1), UncertainValue::lift(1.0, 0.1)};
  CHECK(mean(indep).sigma() == Approx(0.05));
  CHECK_THROWS_AS(mean(std::vector<UncertainValue>{}), InvalidArgument);
}

TEST_CASE("four-term attenuator budget") {
  CHECK(attenuator_relative_sigma(0.001, 0.001, 0.00075, 0.00075) == Approx(0.0017678).epsilon(1e-4));
  auto zr = UncertainValue::lift(1.0, 0.001);
  auto ar = UncertainValue::lift(1.0, 0.001);
  auto nz = UncertainValue::lift(1.0, 0.00075);
  auto na = UncertainValue::lift(1.0, 0.00075);
  CHECK(((ar / na) / (zr / nz)).relative_sigma() == Approx(0.0017678).epsilon(1e-4));
}

TEST_CASE("expression suite matches finite differences") {
  for (const auto& e : testing::expression_suite()) {
    CAPTURE(e.name);
    auto x = testing::lift_all(e);
    auto y = e.propagate(x);
    CHECK(y.value() == Approx(e.eval(e.values)).epsilon(1e-13));
    CHECK(y.sigma() == Approx(testing::finite_difference_sigma(e)).epsilon(1e-6));
  }
}

TEST_CASE("expression suite matches sampling") {
  for (const auto& e : testing::expression_suite()) {
    CAPTURE(e.name);
    auto y = e.propagate(testing::lift_all(e));
    CHECK(testing::monte_carlo_sigma(e, 200000, 5) == Approx(y.sigma()).epsilon(0.02));
  }
}

TEST_CASE("formatting") {
  auto x = UncertainValue::lift(1.5, 0.25);
  auto s = to_string(x, 3);
  CHECK(s.find("1.5") != std::string::npos);
  CHECK(s.find("0.25") != std::string::npos);
}

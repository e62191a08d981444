#include <doctest.h>

#include <cmath>

#include "clssem/oracle.hpp"
#include "clssem/rng.hpp"

using namespace clssem;

TEST_SUITE_BEGIN("oracle");

TEST_CASE("orthogonal regression closed form") {
  // exact proportionality y = 2x: A=2, B=8, C=4, a = (6 + 10)/8 = 2
  const std::vector<double> x1 = {1.0, -1.0}, y1 = {2.0, -2.0};
  const auto r1 = oracle::orthogonal_regression(x1, y1);
  CHECK(r1.a == doctest::Approx(2.0).epsilon(1e-14));

  // symmetric data forces slope 1
  const std::vector<double> x2 = {1.0, 0.0, -1.0}, y2 = {0.0, 1.0, -1.0};
  const auto r2 = oracle::orthogonal_regression(x2, y2);
  CHECK(r2.a == doctest::Approx(1.0).epsilon(1e-14));

  const std::vector<double> xo = {1.0, -1.0}, yo = {1.0, 1.0};  // sum x y = 0
  CHECK_THROWS_AS(oracle::orthogonal_regression(xo, yo), std::invalid_argument);
}

TEST_CASE("orthogonal regression zeroes the stationarity system") {
  Rng rng(6);
  std::vector<double> x(12), y(12);
  for (std::size_t i = 0; i < 12; ++i) {
    const double t = rng.normal();
    x[i] = t + rng.normal(0.0, 0.4);
    y[i] = 0.7 * t + rng.normal(0.0, 0.4);
  }
  const auto r = oracle::orthogonal_regression(x, y);
  // dF/dZ_i = -2 (x_i - Z_i) - 2 a (y_i - a Z_i) = 0
  for (std::size_t i = 0; i < 12; ++i) {
    const double g = -2.0 * (x[i] - r.z[i]) - 2.0 * r.a * (y[i] - r.a * r.z[i]);
    CHECK(std::abs(g) < 1e-10);
  }
  // dF/da = -2 sum (y_i - a Z_i) Z_i = 0
  double ga = 0.0;
  for (std::size_t i = 0; i < 12; ++i) ga += (y[i] - r.a * r.z[i]) * r.z[i];
  CHECK(std::abs(ga) < 1e-10);
}

TEST_CASE("reflective composite scores") {
  Matrix single(1, 1);
  single(0, 0) = 5.0;
  CHECK(oracle::reflective_scores(single, std::vector<double>{1.0})[0] == 5.0);

  Matrix pair(1, 2);
  pair(0, 0) = 2.0;
  pair(0, 1) = 4.0;
  CHECK(oracle::reflective_scores(pair, std::vector<double>{1.0, 1.0})[0] ==
        doctest::Approx(3.0));  // minimizes (2-Z)^2 + (4-Z)^2

  Matrix weighted(1, 2);
  weighted(0, 0) = 1.0;
  weighted(0, 1) = 2.0;
  // minimize (1-Z)^2 + (2-2Z)^2: Z = (1 + 4)/5 = 1
  CHECK(oracle::reflective_scores(weighted, std::vector<double>{1.0, 2.0})[0] ==
        doctest::Approx(1.0));

  CHECK_THROWS_AS(oracle::reflective_scores(pair, std::vector<double>{0.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("reflective scores minimize the row objective (brute force)") {
  Rng rng(9);
  const std::vector<double> lambda = {1.0, 0.6, 1.3};
  Matrix x(1, 3);
  for (double& v : x.v) v = rng.normal();
  const double z = oracle::reflective_scores(x, lambda)[0];

  auto f = [&](std::span<const double> u) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double r = x(0, j) - lambda[j] * u[0];
      acc += r * r;
    }
    return acc;
  };
  const auto brute = oracle::brute_force_min(f, std::vector<double>{-3.0},
                                             std::vector<double>{3.0}, 61, 1e-8);
  CHECK(z == doctest::Approx(brute.u[0]).epsilon(1e-5));
}

TEST_CASE("brute force on a convex quadratic hits the analytic minimum") {
  auto f = [](std::span<const double> u) {
    return 2.0 * (u[0] - 0.3) * (u[0] - 0.3) + (u[1] + 0.7) * (u[1] + 0.7);
  };
  const auto r = oracle::brute_force_min(f, std::vector<double>{-2.0, -2.0},
                                         std::vector<double>{2.0, 2.0}, 9, 1e-8);
  CHECK(r.u[0] == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(r.u[1] == doctest::Approx(-0.7).epsilon(1e-6));
  CHECK(r.value < 1e-12);

  CHECK_THROWS_AS(oracle::brute_force_min(f, std::vector<double>(9, 0.0),
                                          std::vector<double>(9, 1.0), 3, 1e-3),
                  std::invalid_argument);
}

TEST_CASE("two oracles agree on a random regression instance") {
  Rng rng(123);
  const std::size_t n = 5;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.normal();
    x[i] = t + rng.normal(0.0, 0.3);
    y[i] = 1.1 * t + rng.normal(0.0, 0.3);
  }
  const auto closed = oracle::orthogonal_regression(x, y);

  // grid over (a, Z_1..Z_5) around the closed form, then refine
  auto f = [&](std::span<const double> u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r1 = x[i] - u[1 + i];
      const double r2 = y[i] - u[0] * u[1 + i];
      acc += r1 * r1 + r2 * r2;
    }
    return acc;
  };
  std::vector<double> lower = {closed.a - 0.5};
  std::vector<double> upper = {closed.a + 0.5};
  for (std::size_t i = 0; i < n; ++i) {
    lower.push_back(closed.z[i] - 0.5);
    upper.push_back(closed.z[i] + 0.5);
  }
  const auto brute = oracle::brute_force_min(f, lower, upper, 7, 1e-6);
  CHECK(brute.u[0] == doctest::Approx(closed.a).epsilon(1e-4));
  for (std::size_t i = 0; i < n; ++i)
    CHECK(std::abs(brute.u[1 + i] - closed.z[i]) < 1e-4);
}

TEST_SUITE_END();

#include <doctest.h>

#include <cmath>

#include "clssem/objective.hpp"
#include "clssem/oracle.hpp"
#include "clssem/optimizer.hpp"
#include "clssem/rng.hpp"
#include "clssem/simgen.hpp"

using namespace clssem;

namespace {

Dataset make_data(std::vector<std::string> cols, std::size_t n,
                  const std::vector<double>& values) {
  Dataset d;
  d.columns = std::move(cols);
  d.a = Matrix(n, d.columns.size());
  d.a.v = values;
  return d;
}

Model single_indicator_model() {
  return parse_model("latent: Z\nmanifest: x1\neq e1: x1 = Z\n");
}

Model eiv_regression_model() {
  return parse_model(
      "latent: Z\nmanifest: x, y\nparam: a\n"
      "eq e1: x = Z\n"
      "eq e2: y = a*Z\n");
}

// objective-level central differences
void check_gradient_fd(const Objective& obj, std::span<const double> u, double tol = 1e-5) {
  std::vector<double> grad;
  const double f0 = obj.value_and_gradient(u, grad);
  REQUIRE(std::isfinite(f0));
  std::vector<double> x(u.begin(), u.end());
  double scale = 1.0;
  for (double g : grad) scale = std::max(scale, std::abs(g));
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = x[j];
    const double h = 1e-6 * std::max(1.0, std::abs(saved));
    x[j] = saved + h;
    const double fp = obj.value(x);
    x[j] = saved - h;
    const double fm = obj.value(x);
    x[j] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    CHECK(std::abs(grad[j] - fd) / scale < tol);
  }
}

}  // namespace

TEST_SUITE_BEGIN("objective");

TEST_CASE("single residual arithmetic") {
  const Model m = single_indicator_model();
  const Dataset d = make_data({"x1"}, 1, {5.0});
  Objective obj(m, d, {1.0});
  // u = [Z_1]
  CHECK(obj.value(std::vector<double>{3.0}) == doctest::Approx(4.0));  // (5-3)^2
  CHECK(obj.value(std::vector<double>{5.0}) == 0.0);                   // exact fit

  const Matrix eps = obj.residuals(std::vector<double>{5.0});
  CHECK(eps(0, 0) == 0.0);
}

TEST_CASE("residual matrix by direct substitution") {
  const Model m = single_indicator_model();
  const Dataset d = make_data({"x1"}, 2, {1.0, 2.0});
  Objective obj(m, d, {1.0});
  const Matrix eps = obj.residuals(std::vector<double>{0.0, 0.0});
  CHECK(eps(0, 0) == 1.0);
  CHECK(eps(1, 0) == 2.0);
}

TEST_CASE("value at the closed-form regression minimizer equals the grid minimum") {
  const Model m = eiv_regression_model();
  // three synthetic cases
  const std::vector<double> x = {1.0, -0.5, 0.3};
  const std::vector<double> y = {1.9, -1.1, 0.7};
  Dataset d = make_data({"x", "y"}, 3, {x[0], y[0], x[1], y[1], x[2], y[2]});
  Objective obj(m, d, {1.0, 1.0});

  const auto closed = oracle::orthogonal_regression(x, y);
  std::vector<double> u_star = {closed.a, closed.z[0], closed.z[1], closed.z[2]};
  const double f_star = obj.value(u_star);

  const std::vector<double> lower = {closed.a - 1.0, closed.z[0] - 1.0, closed.z[1] - 1.0,
                                     closed.z[2] - 1.0};
  const std::vector<double> upper = {closed.a + 1.0, closed.z[0] + 1.0, closed.z[1] + 1.0,
                                     closed.z[2] + 1.0};
  const auto brute = oracle::brute_force_min(obj, lower, upper, 11, 1e-7);
  CHECK(f_star == doctest::Approx(brute.value).epsilon(1e-9));
  CHECK(f_star <= brute.value + 1e-9);
}

TEST_CASE("gradient is exact at an interior point and zero at an exact fit") {
  const Model m = eiv_regression_model();
  Dataset d = make_data({"x", "y"}, 2, {1.0, 2.0, -1.0, -2.0});
  Objective obj(m, d, {1.0, 1.0});

  // exact fit: a = 2, Z = x
  std::vector<double> grad;
  const double f = obj.value_and_gradient(std::vector<double>{2.0, 1.0, -1.0}, grad);
  CHECK(f == 0.0);
  for (double g : grad) CHECK(g == 0.0);

  check_gradient_fd(obj, std::vector<double>{0.7, 0.4, -1.2});
}

TEST_CASE("gradient matches finite differences on random models and points") {
  Rng rng(2024);
  const Model m = parse_model(
      "latent: Z, W\nmanifest: x, y\nparam: a, b, c = 0.5\n"
      "eq e1: x = Z + a\n"
      "eq e2: y = b*Z*W + c*W^2\n"
      "eq e3: x = exp(Z/4)*b + theta(W - a)\n");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3;
    std::vector<double> values(n * 2);
    for (double& v : values) v = rng.normal();
    Dataset d = make_data({"x", "y"}, n, values);
    Objective obj(m, d, {1.0, 0.5, 2.0});
    std::vector<double> u(obj.dim());
    for (double& v : u) v = rng.normal();
    check_gradient_fd(obj, u);
  }
}

TEST_CASE("centering penalty contributes 2P sum(Z) to every score gradient") {
  const Model m = parse_model(
      "latent: Z\nmanifest: x1\neq e1: x1 = Z\nconstraint center(Z)\n");
  const Dataset d = make_data({"x1"}, 3, {1.0, 2.0, 3.0});
  const double p = 50.0;
  Objective obj(m, d, {1.0}, p);

  const std::vector<double> u = {1.0, 2.0, 4.0};  // sum Z = 7
  std::vector<double> grad;
  obj.value_and_gradient(u, grad);
  // total per-score gradient: residual part + centering part
  for (std::size_t i = 0; i < 3; ++i) {
    const double residual_part = -2.0 * (d.a(i, 0) - u[i]);
    CHECK(grad[i] == doctest::Approx(residual_part + 2.0 * p * 7.0).epsilon(1e-12));
  }
  check_gradient_fd(obj, u);
}

TEST_CASE("soft constraint penalties and their gradients") {
  const Model m = parse_model(
      "latent: Z, W\nmanifest: x, y\nparam: b\n"
      "eq e1: x = Z\n"
      "eq e2: y = b*W\n"
      "constraint normalize(Z)\n"
      "constraint zerocov(e1, e2)\n"
      "constraint zerolatcov(W, e1)\n");
  Rng rng(5);
  std::vector<double> values(8);
  for (double& v : values) v = rng.normal();
  Dataset d = make_data({"x", "y"}, 4, values);
  Objective obj(m, d, {1.0, 1.0}, 3.0);
  std::vector<double> u(obj.dim());
  for (double& v : u) v = rng.normal();
  check_gradient_fd(obj, u);

  // value assembles exactly: residuals + P * (each constraint sum)^2
  const Matrix eps = obj.residuals(u);
  const UnknownLayout& L = obj.layout();
  double expected = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    expected += eps(i, 0) * eps(i, 0) + eps(i, 1) * eps(i, 1);
  double s_norm = -4.0, s_cov = 0.0, s_lat = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double z = u[L.latent_slot(i, 0)], w = u[L.latent_slot(i, 1)];
    s_norm += z * z;
    s_cov += eps(i, 0) * eps(i, 1);
    s_lat += w * eps(i, 0);
  }
  expected += 3.0 * (s_norm * s_norm + s_cov * s_cov + s_lat * s_lat);
  CHECK(obj.value(u) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hard constraints project and pull the gradient back") {
  const Model m = parse_model(
      "latent: Z\nmanifest: x\nparam: lam\n"
      "eq e1: x = lam*Z\n"
      "constraint hard center(Z)\n"
      "constraint hard normalize(Z)\n");
  Rng rng(11);
  std::vector<double> values(5);
  for (double& v : values) v = rng.normal();
  Dataset d = make_data({"x"}, 5, values);
  Objective obj(m, d, {1.0});

  std::vector<double> u(obj.dim());
  for (double& v : u) v = rng.normal();
  const std::vector<double> pu = obj.project(u);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    sum += pu[obj.layout().latent_slot(i, 0)];
    sum_sq += pu[obj.layout().latent_slot(i, 0)] * pu[obj.layout().latent_slot(i, 0)];
  }
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sum_sq == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(obj.value(u) == doctest::Approx(obj.value(pu)).epsilon(1e-12));

  check_gradient_fd(obj, u, 1e-4);
}

TEST_CASE("weight scaling scales the value and keeps the argmin") {
  const Model m = eiv_regression_model();
  Rng rng(3);
  std::vector<double> values(12);
  for (double& v : values) v = rng.normal();
  Dataset d = make_data({"x", "y"}, 6, values);
  Objective obj1(m, d, {1.0, 1.0});
  Objective obj3(m, d, {3.0, 3.0});

  std::vector<double> u(obj1.dim());
  for (double& v : u) v = rng.normal();
  CHECK(obj3.value(u) == doctest::Approx(3.0 * obj1.value(u)).epsilon(1e-12));

  OptimizerConfig cfg;
  cfg.multistarts = 1;
  cfg.gradient_tolerance = 1e-12;
  const std::vector<double> init = default_start(m, d);
  const OptimResult r1 = minimize(obj1, cfg, init);
  const OptimResult r3 = minimize(obj3, cfg, init);
  CHECK(r1.u[0] == doctest::Approx(r3.u[0]).epsilon(1e-7));
}

TEST_CASE("value is invariant under joint case permutation") {
  const Model m = eiv_regression_model();
  Rng rng(8);
  const std::size_t n = 7;
  std::vector<double> values(n * 2);
  for (double& v : values) v = rng.normal();
  Dataset d = make_data({"x", "y"}, n, values);

  std::vector<std::size_t> perm = {3, 0, 6, 2, 5, 1, 4};
  Dataset dp = d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 2; ++j) dp.a(i, j) = d.a(perm[i], j);

  Objective obj(m, d, {1.0, 1.0});
  Objective objp(m, dp, {1.0, 1.0});
  std::vector<double> u(obj.dim());
  for (double& v : u) v = rng.normal();
  std::vector<double> up = u;
  for (std::size_t i = 0; i < n; ++i)
    up[objp.layout().latent_slot(i, 0)] = u[obj.layout().latent_slot(perm[i], 0)];
  CHECK(obj.value(u) == doctest::Approx(objp.value(up)).epsilon(1e-13));
}

TEST_CASE("centering violation at the minimizer shrinks like 1/P") {
  const Model base = parse_model(
      "latent: Z\nmanifest: x\neq e1: x = Z\nconstraint center(Z)\n");
  // data with non-zero mean so the constraint actually binds
  const Dataset d = make_data({"x"}, 4, {1.0, 2.0, 3.0, 6.0});

  OptimizerConfig cfg;
  cfg.multistarts = 1;
  cfg.gradient_tolerance = 1e-13;
  cfg.max_iterations = 5000;

  auto violation = [&](double p) {
    Objective obj(base, d, {1.0}, p);
    const OptimResult r = minimize(obj, cfg, default_start(base, d));
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += r.u[obj.layout().latent_slot(i, 0)];
    return std::abs(s);
  };
  const double v1 = violation(10.0);
  const double v2 = violation(100.0);
  const double v3 = violation(1000.0);
  CHECK(v2 < v1);
  CHECK(v3 < v2);
  CHECK(v1 / v2 == doctest::Approx(10.0).epsilon(0.15));
  CHECK(v2 / v3 == doctest::Approx(10.0).epsilon(0.15));
}

TEST_CASE("democracy residual SDs at the truth match the generating sigmas") {
  const std::size_t n = 4000;
  const SimData sim = gen_democracy(n, 99);
  const Model m = study_model(Study::democracy);
  Objective obj(m, sim.data, std::vector<double>(m.n_equations(), 1.0));
  // build u from the generating truth
  std::vector<double> u(obj.dim(), 0.0);
  const UnknownLayout& L = obj.layout();
  for (std::size_t j = 0; j < m.n_free_params(); ++j) {
    const std::string& name = m.symbols.name_of(SymbolKind::param, m.free_params[j]);
    u[j] = sim.true_params.at(name);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < 3; ++q) u[L.latent_slot(i, q)] = sim.true_latents(i, q);

  const Matrix eps = obj.residuals(u);
  const double sigma[13] = {0.1, 0.2, 0.3, 0.2, 0.1, 0.2, 0.3, 0.2, 0.1, 0.2, 0.3, 0.5, 0.2};
  for (std::size_t l = 0; l < 13; ++l) {
    double mean = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += eps(i, l);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) acc += (eps(i, l) - mean) * (eps(i, l) - mean);
    const double sd = std::sqrt(acc / static_cast<double>(n));
    // sampling error of an SD is about sigma/sqrt(2n)
    CHECK(std::abs(sd - sigma[l]) < 5.0 * sigma[l] / std::sqrt(2.0 * n));
  }
}

TEST_SUITE_END();

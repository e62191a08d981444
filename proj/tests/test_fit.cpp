#include <doctest.h>

#include <cmath>

#include "clssem/estimator.hpp"
#include "clssem/fit.hpp"
#include "clssem/rng.hpp"
#include "clssem/simgen.hpp"

using namespace clssem;

TEST_SUITE_BEGIN("fit");

TEST_CASE("residual mean R") {
  CHECK(residual_mean_R(0.0, 10, 3) == 0.0);
  CHECK(residual_mean_R(30.0, 10, 3) == doctest::Approx(1.0));
  CHECK(residual_mean_R(4.0, 2, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(residual_mean_R(-1.0, 2, 2), std::invalid_argument);
}

TEST_CASE("chi-square statistic and degrees of freedom") {
  // all-zero residuals with unit variances: statistic 0
  Matrix zero(5, 2);
  const std::vector<double> unit = {1.0, 1.0};
  const ChiSquareFit z = chi_square_stat(zero, unit, 1, 0, DfMode::equations);
  CHECK(z.statistic == 0.0);
  CHECK(z.df == 10.0);
  CHECK(z.p_value == doctest::Approx(1.0));

  // naive df arithmetic: n m - (n Q + S)
  Matrix small(100, 13, 0.1);
  std::vector<double> var13(13, 1.0);
  const ChiSquareFit naive = chi_square_stat(small, var13, 3, 8, DfMode::naive);
  CHECK(naive.df == 992.0);

  // zero variance is an error
  const std::vector<double> degenerate = {1.0, 0.0};
  CHECK_THROWS_AS(chi_square_stat(zero, degenerate, 1, 0, DfMode::equations),
                  std::invalid_argument);

  // statistic/df -> 1 for true standard normal residuals
  Rng rng(123);
  Matrix eps(1000, 5);
  for (double& v : eps.v) v = rng.normal();
  const std::vector<double> truth(5, 1.0);
  const ChiSquareFit big = chi_square_stat(eps, truth, 0, 0, DfMode::equations);
  CHECK(big.statistic / big.df == doctest::Approx(1.0).epsilon(4.0 * std::sqrt(2.0 / big.df)));
}

TEST_CASE("chi-square from an estimation result") {
  const SimData sim = gen_regression(80, 10);
  EstimationConfig cfg;
  cfg.opt.multistarts = 1;
  const EstimationResult res =
      estimate(study_model(Study::regression), sim.data, WeightStrategy::w1, cfg);
  const ChiSquareFit fit = chi_square_fit(res, DfMode::naive);
  CHECK(fit.df == 80.0 * 4.0 - (80.0 + 1.0));
  CHECK(fit.statistic > 0.0);
  CHECK(fit.p_value >= 0.0);
  CHECK(fit.p_value <= 1.0);
}

TEST_CASE("identity permutation reproduces the original fit exactly") {
  const SimData sim = gen_regression(40, 6);
  EstimationConfig cfg;
  cfg.opt.multistarts = 1;
  const PermutationNull null =
      permutation_null_fit(study_model(Study::regression), sim.data, WeightStrategy::w1,
                           cfg, 3, 17, 1, /*identity_debug=*/true);
  REQUIRE(null.null_f_min.size() == 3);
  for (double v : null.null_f_min) CHECK(v == null.original_f_min);
  CHECK(null.exceedance_count == 0);
}

TEST_CASE("structured data beats every permutation null") {
  const SimData sim = gen_regression(60, 9);
  EstimationConfig cfg;
  cfg.opt.multistarts = 1;
  const PermutationNull null = permutation_null_fit(
      study_model(Study::regression), sim.data, WeightStrategy::w1, cfg, 6, 4, 2);
  REQUIRE(null.null_f_min.size() == 6);
  CHECK(null.failures == 0);
  CHECK(null.exceedance_count == 0);
  CHECK(null.fraction_below == 0.0);
  for (double v : null.null_f_min) CHECK(v > null.original_f_min);
}

TEST_CASE("pure-noise data sits inside the null distribution") {
  // independent columns: permutations change nothing structurally
  Rng rng(77);
  Dataset d;
  d.columns = {"x1", "x2", "y1", "y2"};
  d.a = Matrix(60, 4);
  for (double& v : d.a.v) v = rng.normal();
  EstimationConfig cfg;
  cfg.opt.multistarts = 1;
  const PermutationNull null = permutation_null_fit(
      study_model(Study::regression), d, WeightStrategy::w1, cfg, 10, 5, 2);
  REQUIRE(!null.null_f_min.empty());
  const double lo = *std::min_element(null.null_f_min.begin(), null.null_f_min.end());
  const double hi = *std::max_element(null.null_f_min.begin(), null.null_f_min.end());
  // the original is not an outlier below the bulk
  CHECK(null.original_f_min > lo * 0.9);
  CHECK(null.original_f_min < hi * 1.1);
}

TEST_CASE("single permutation replicate") {
  const SimData sim = gen_regression(30, 2);
  EstimationConfig cfg;
  cfg.opt.multistarts = 1;
  const PermutationNull null = permutation_null_fit(
      study_model(Study::regression), sim.data, WeightStrategy::w1, cfg, 1, 3);
  CHECK(null.null_f_min.size() == 1);
}

TEST_SUITE_END();

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "clssem/objective.hpp"

namespace clssem {

/// Independent ground-truth computations used by the test suites. These stay
/// deliberately separate from the optimizer code paths they check.
namespace oracle {

struct OrthogonalRegression {
  double a = 0.0;
  std::vector<double> z;
};

/// Closed-form joint minimizer of sum_i (x_i - Z_i)^2 + (y_i - a Z_i)^2:
///   a = (B - A + sqrt((A - B)^2 + 4 C^2)) / (2 C),  Z_i = (x_i + a y_i)/(1 + a^2)
/// with A = sum x^2, B = sum y^2, C = sum x y. Throws when C == 0.
OrthogonalRegression orthogonal_regression(std::span<const double> x,
                                           std::span<const double> y);

/// Composite scores of the pure reflective model x_j = lambda_j Z:
/// Z_i = sum_j x_ji lambda_j / sum_j lambda_j^2 (the stationarity solution).
/// `x` is n x m with one column per indicator.
std::vector<double> reflective_scores(const Matrix& x, std::span<const double> lambda);

struct BruteForceResult {
  std::vector<double> u;
  double value = 0.0;
};

/// Dense grid search over a box followed by pattern-search refinement.
/// Dimension capped at 8; test-support only.
BruteForceResult brute_force_min(const std::function<double(std::span<const double>)>& f,
                                 std::span<const double> lower, std::span<const double> upper,
                                 std::size_t points_per_dim, double refine_tol = 1e-7);

BruteForceResult brute_force_min(const Objective& obj, std::span<const double> lower,
                                 std::span<const double> upper, std::size_t points_per_dim,
                                 double refine_tol = 1e-7);

}  // namespace oracle
}  // namespace clssem

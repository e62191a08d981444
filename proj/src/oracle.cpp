#include "clssem/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace clssem {
namespace oracle {

OrthogonalRegression orthogonal_regression(std::span<const double> x,
                                           std::span<const double> y) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("orthogonal_regression: mismatched input lengths");
  double a_sum = 0.0, b_sum = 0.0, c_sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    a_sum += x[i] * x[i];
    b_sum += y[i] * y[i];
    c_sum += x[i] * y[i];
  }
  if (c_sum == 0.0)
    throw std::invalid_argument("orthogonal_regression: degenerate orientation (sum x y = 0)");

  OrthogonalRegression out;
  out.a = (b_sum - a_sum + std::sqrt((a_sum - b_sum) * (a_sum - b_sum) + 4.0 * c_sum * c_sum)) /
          (2.0 * c_sum);
  out.z.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.z[i] = (x[i] + out.a * y[i]) / (1.0 + out.a * out.a);
  return out;
}

std::vector<double> reflective_scores(const Matrix& x, std::span<const double> lambda) {
  if (lambda.size() != x.cols)
    throw std::invalid_argument("reflective_scores: loading count != indicator count");
  double denom = 0.0;
  for (double l : lambda) denom += l * l;
  if (denom == 0.0) throw std::invalid_argument("reflective_scores: zero loading vector");
  std::vector<double> z(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double num = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) num += x(i, j) * lambda[j];
    z[i] = num / denom;
  }
  return z;
}

BruteForceResult brute_force_min(const std::function<double(std::span<const double>)>& f,
                                 std::span<const double> lower, std::span<const double> upper,
                                 std::size_t points_per_dim, double refine_tol) {
  const std::size_t dim = lower.size();
  if (dim == 0 || dim > 8)
    throw std::invalid_argument("brute_force_min: dimension must be in 1..8");
  if (upper.size() != dim || points_per_dim < 2)
    throw std::invalid_argument("brute_force_min: bad bounds or resolution");

  std::vector<double> point(dim), best(dim);
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> step(dim);
  for (std::size_t j = 0; j < dim; ++j)
    step[j] = (upper[j] - lower[j]) / static_cast<double>(points_per_dim - 1);

  for (;;) {
    for (std::size_t j = 0; j < dim; ++j)
      point[j] = lower[j] + step[j] * static_cast<double>(idx[j]);
    const double v = f(point);
    if (std::isfinite(v) && v < best_value) {
      best_value = v;
      best = point;
    }
    std::size_t j = 0;
    for (; j < dim; ++j) {
      if (++idx[j] < points_per_dim) break;
      idx[j] = 0;
    }
    if (j == dim) break;
  }

  // pattern-search refinement from the best grid node
  double h = *std::max_element(step.begin(), step.end());
  while (h > refine_tol) {
    bool improved = false;
    for (std::size_t j = 0; j < dim; ++j) {
      for (double sgn : {1.0, -1.0}) {
        point = best;
        point[j] += sgn * h;
        const double v = f(point);
        if (std::isfinite(v) && v < best_value) {
          best_value = v;
          best = point;
          improved = true;
        }
      }
    }
    if (!improved) h *= 0.5;
  }

  return BruteForceResult{std::move(best), best_value};
}

BruteForceResult brute_force_min(const Objective& obj, std::span<const double> lower,
                                 std::span<const double> upper, std::size_t points_per_dim,
                                 double refine_tol) {
  return brute_force_min(
      [&obj](std::span<const double> u) { return obj.value(u); }, lower, upper,
      points_per_dim, refine_tol);
}

}  // namespace oracle
}  // namespace clssem

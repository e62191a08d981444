#pragma once

#include <span>
#include <vector>

#include "clssem/model.hpp"

namespace clssem {

/// The weighted least-squares objective
///   F_w(u) = sum_l w_l sum_i g_l(case i)^2  +  P * sum_c (constraint sum)^2
/// over the unknown vector u = [free params | latent scores case-major].
/// Soft constraints enter as penalty terms; hard center/normalize constraints
/// are enforced by projecting u before evaluation.
///
/// value / value_and_gradient / residuals are pure and safe to call from
/// multiple threads on a shared Objective.
class Objective {
 public:
  /// weights must have length m and positive entries. penalty <= 0 selects
  /// the default P = 1e3 * m * n * mean(A^2).
  Objective(const Model& model, const Dataset& data, std::vector<double> weights,
            double penalty = 0.0);

  std::size_t dim() const { return layout_.size(); }
  const UnknownLayout& layout() const { return layout_; }
  const Model& model() const { return *model_; }
  const std::vector<double>& weights() const { return weights_; }
  double penalty() const { return penalty_; }

  /// Mean squared data magnitude; the scale behind the default penalty.
  double data_scale() const { return data_scale_; }
  /// Mean of the data column variances; the scale behind variance floors.
  double data_variance_scale() const { return data_var_scale_; }

  /// F_w(u) plus penalties; +inf when any equation evaluates non-finite.
  double value(std::span<const double> u) const;

  /// Returns value(u) and fills grad with the exact analytic gradient.
  double value_and_gradient(std::span<const double> u, std::vector<double>& grad) const;

  /// As above with the weight vector overridden (used by strategies that
  /// treat weights as unknowns).
  double value_with_weights(std::span<const double> u, std::span<const double> w) const;
  double value_and_gradient_with_weights(std::span<const double> u, std::span<const double> w,
                                         std::vector<double>& grad) const;

  /// Adds sum_l lambda_l * d var_l(u) / du to grad, where var_l is the
  /// centered (denominator n) sample variance of equation l's residuals.
  /// Only valid without hard constraints.
  void accumulate_variance_gradient(std::span<const double> u, std::span<const double> lambda,
                                    std::vector<double>& grad) const;

  /// Residual matrix eps with eps(i, l) = g_l at case i.
  Matrix residuals(std::span<const double> u) const;

  /// Applies the hard constraints (if any) to u and returns the result.
  std::vector<double> project(std::span<const double> u) const;

  bool has_hard_constraints() const { return has_hard_; }

  /// Adds the Gauss-Newton Hessian approximation
  ///   2 sum_{i,l} w_l J_{il} J_{il}^T + 2P sum_c grad(s_c) grad(s_c)^T
  /// into the dim x dim row-major buffer h (resized and zeroed here).
  /// Exploits the sparse slot pattern of each equation.
  void accumulate_gauss_newton(std::span<const double> u, std::vector<double>& h) const;

 private:
  double evaluate(std::span<const double> u, std::vector<double>* grad,
                  std::span<const double> w) const;

  const Model* model_;
  UnknownLayout layout_;
  Matrix data_;  // n x k, columns reordered to manifest declaration order
  std::vector<double> weights_;
  double penalty_ = 0.0;
  double data_scale_ = 0.0;
  double data_var_scale_ = 0.0;
  bool has_hard_ = false;
  bool has_residual_constraints_ = false;  // zerocov / zerolatcov present
};

}  // namespace clssem

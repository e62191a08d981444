#pragma once

#include <cstdint>
#include <vector>

#include "clssem/weights.hpp"

namespace clssem {

/// Residual-mean fit measure R = sqrt(f_min / (n m)).
double residual_mean_R(double f_min, std::size_t n_cases, std::size_t n_equations);

struct PermutationNull {
  double original_f_min = 0.0;
  std::vector<double> null_f_min;    // one per successful replicate
  std::size_t failures = 0;          // replicates whose estimation failed
  std::size_t exceedance_count = 0;  // null samples strictly below the original
  double fraction_below = 0.0;       // exceedance_count / successful replicates
};

/// No-structure baseline: independently permutes every data column, re-runs
/// the estimation (same strategy and seed-derived starts as the original fit)
/// and records each null F_min. `identity_debug` uses the identity
/// permutation everywhere, which must reproduce the original F_min exactly.
PermutationNull permutation_null_fit(const Model& model, const Dataset& data,
                                     WeightStrategy strategy, const EstimationConfig& cfg,
                                     std::size_t reps, std::uint64_t seed,
                                     std::size_t jobs = 1, bool identity_debug = false);

/// Degrees-of-freedom conventions for the chi-square fit test; both are
/// implementation choices, clearly labelled experimental.
enum class DfMode { naive, equations };

struct ChiSquareFit {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 0.0;
};

/// statistic = sum_{i,l} eps_il^2 / var_l with the given per-equation
/// variances; df per mode: naive = n m - (n Q + S_free), equations = n m.
ChiSquareFit chi_square_stat(const Matrix& residuals, std::span<const double> variances,
                             std::size_t n_latent, std::size_t n_free_params, DfMode mode);

struct EstimationResult;  // estimator.hpp
ChiSquareFit chi_square_fit(const EstimationResult& result, DfMode mode);

}  // namespace clssem

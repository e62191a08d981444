#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clssem/weights.hpp"

namespace clssem {

struct EstimationResult {
  // estimates
  std::vector<std::string> param_names;  // free parameters, declaration order
  std::vector<double> param_values;
  std::map<std::string, double> all_params;  // free and fixed
  std::vector<std::string> latent_names;
  Matrix latent_scores;  // n x Q
  Matrix residuals;      // n x m

  // second moments (denominator n)
  std::vector<double> residual_variance;  // m
  Matrix residual_cov;                    // m x m
  Matrix latent_error_cov;                // Q x m

  // objective
  std::vector<double> weights;
  double f_min = 0.0;
  double fit_r = 0.0;  // sqrt(f_min / (n m))

  // diagnostics
  WeightStrategy strategy = WeightStrategy::w1;
  OptimResult optim;  // per-start records etc.
  Definiteness uniqueness = Definiteness::unknown;
  double wo_k = 0.0;
  bool wo_degenerate = false;
  double wa_h = 0.0;
  std::vector<WaEvalRecord> wa_log;
  std::vector<std::string> warnings;
  double wall_time_ms = 0.0;

  std::size_t n_cases() const { return residuals.rows; }
  std::size_t n_equations() const { return residuals.cols; }
};

struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full pipeline: weight strategy, minimization, result packaging.
/// Deterministic for a fixed cfg.opt.seed.
EstimationResult estimate(const Model& model, const Dataset& data, WeightStrategy strategy,
                          const EstimationConfig& cfg);

/// Sample covariances (denominator n) of the residual columns and between
/// latent-score columns and residual columns: (m x m, Q x m).
std::pair<Matrix, Matrix> error_covariances(const EstimationResult& result);

/// Result document; schema documented in the README.
std::string result_to_json(const EstimationResult& result, int indent = 2);

}  // namespace clssem

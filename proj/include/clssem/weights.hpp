#pragma once

#include <string>
#include <vector>

#include "clssem/optimizer.hpp"

namespace clssem {

enum class WeightStrategy : unsigned char { w1, wn, ww, wo, wa };

WeightStrategy parse_strategy(const std::string& name);  // "w1".."wa"
const char* to_string(WeightStrategy s);

/// Shared knobs for a full estimation run. `penalty` and `wo_penalty` of 0
/// select the data-scaled defaults.
struct EstimationConfig {
  OptimizerConfig opt;
  double penalty = 0.0;     // constraint penalty P for the objective
  double wo_penalty = 0.0;  // penalty for the W_o weight-consistency term
  std::size_t wa_budget = 0;  // 0 -> opt.wa_budget
  double weight_floor = 1e-6;
  double variance_floor_factor = 1e-8;  // times the data variance scale
  bool ww_iterate = false;              // expert flag: iterate W_w up to ww_iterations
  std::size_t ww_iterations = 3;
  bool compute_uniqueness = true;
  std::size_t uniqueness_dim_cap = 600;
};

struct WaEvalRecord {
  std::vector<double> w;
  double h = 0.0;
  bool converged = false;
};

/// Everything a strategy produces: the weight vector, the minimization at
/// those weights, and strategy-specific diagnostics.
struct StrategyRun {
  std::vector<double> weights;
  OptimResult optim;
  double wo_k = 0.0;           // W_o proportionality factor K
  bool wo_degenerate = false;  // W_o collapse warning
  double wa_h = 0.0;           // H at the returned W_a weights
  std::vector<WaEvalRecord> wa_log;
  std::vector<std::string> notes;
};

std::vector<double> weights_w1(std::size_t n_equations);

/// w_l = n^(-L_l) with L_l the number of latent variables in equation l.
std::vector<double> weights_wn(const Model& model, std::size_t n_cases);

/// Sample variances (denominator n) of the residual matrix columns, floored
/// at variance_floor.
std::vector<double> residual_variances(const Matrix& eps, double variance_floor = 0.0);

StrategyRun run_w1(const Model& model, const Dataset& data, const EstimationConfig& cfg);
StrategyRun run_wn(const Model& model, const Dataset& data, const EstimationConfig& cfg);

/// Two-step strategy: W_n estimation, then reciprocal residual variances.
StrategyRun weights_ww(const Model& model, const Dataset& data, const EstimationConfig& cfg);

/// Self-consistent strategy: jointly minimizes over (u, w, K) with the
/// penalty P * sum_l (w_l - K / var_l(u))^2, warm-started from W_w. The
/// simplex constraints hold by construction (interior parameterization).
StrategyRun weights_wo(const Model& model, const Dataset& data, const EstimationConfig& cfg);

/// Angle-maximization strategy: maximizes H(w) = cos(w, 1/sigma(w)^2) over
/// the weight simplex; every evaluation runs an inner minimization.
StrategyRun weights_wa(const Model& model, const Dataset& data, const EstimationConfig& cfg);

StrategyRun run_strategy(const Model& model, const Dataset& data, WeightStrategy strategy,
                         const EstimationConfig& cfg);

/// Angle measure H between w and the element-wise inverse squared sigmas.
double angle_h(std::span<const double> w, std::span<const double> sigma);

}  // namespace clssem

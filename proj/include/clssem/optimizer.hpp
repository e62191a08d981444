#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clssem/objective.hpp"

namespace clssem {

/// Generic smooth objective: returns the value at u and, when grad is
/// non-null, fills it with the gradient.
using ObjectiveFn =
    std::function<double(std::span<const double> u, std::vector<double>* grad)>;

struct OptimizerConfig {
  std::size_t max_iterations = 2000;
  double gradient_tolerance = 1e-8;  // relative to the initial gradient norm
  std::size_t multistarts = 5;
  std::uint64_t seed = 0;
  std::size_t history = 8;  // L-BFGS memory pairs
  double armijo_c1 = 1e-4;
  double backtrack_factor = 0.5;
  std::size_t max_line_search_steps = 50;
  double start_noise_sd = 0.5;  // relative SD of multistart perturbations
  std::size_t wa_budget = 60;   // outer-optimizer budget for strategy Wa
  bool parallel_starts = false;
  std::size_t jobs = 1;
};

struct StartRecord {
  std::size_t start_index = 0;
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::string stop_reason;
};

struct OptimResult {
  std::vector<double> u;
  double value = 0.0;
  bool converged = false;
  std::size_t best_start = 0;
  std::vector<StartRecord> starts;
};

struct OptimizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Multi-start limited-memory quasi-Newton descent. Start 0 uses init as
/// given; further starts perturb it with seeded Gaussian noise and each start
/// retries its perturbation while the objective is non-finite. Deterministic
/// for a fixed (init, cfg) regardless of parallel schedule: ties between
/// starts break on the lower start index.
OptimResult minimize(const ObjectiveFn& f, std::span<const double> init,
                     const OptimizerConfig& cfg);

/// Convenience overload for model objectives.
OptimResult minimize(const Objective& obj, const OptimizerConfig& cfg,
                     std::span<const double> init);

/// Model-aware start point: latent scores begin at the centered values of
/// their first single-latent indicator, loading-like parameters at 1 and
/// structural coefficients / offsets at 0.
std::vector<double> default_start(const Model& model, const Dataset& data);

enum class Definiteness { positive_definite, semi_definite, indefinite, unknown };

std::string to_string(Definiteness d);

/// Classifies the Hessian of the objective at a converged minimizer,
/// restricted to free directions (directions removed by hard constraints are
/// deflated out). Uses an exact finite-difference Hessian of the analytic
/// gradient for |u| <= 200 and a Gauss-Newton approximation up to
/// |u| <= 2000; larger problems report `unknown`.
Definiteness local_uniqueness(const Objective& obj, std::span<const double> u);

struct SimplexResult {
  std::vector<double> w;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
};

/// Derivative-free Nelder-Mead maximization of f over the weight simplex
/// {w : sum w = 1, w_l >= floor}; every trial point is projected onto the
/// simplex before evaluation. For m == 1 returns (1.0) without evaluating.
SimplexResult maximize_on_simplex(const std::function<double(std::span<const double>)>& f,
                                  std::size_t m, std::size_t budget, std::uint64_t seed,
                                  double floor = 1e-6,
                                  std::span<const double> start = {});

/// Euclidean projection onto {w : sum w = 1, w_l >= floor}.
std::vector<double> project_onto_simplex(std::span<const double> w, double floor = 1e-6);

}  // namespace clssem

#include "clssem/fit.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "clssem/estimator.hpp"
#include "clssem/parallel.hpp"
#include "clssem/rng.hpp"

namespace clssem {

double residual_mean_R(double f_min, std::size_t n_cases, std::size_t n_equations) {
  if (f_min < 0.0) throw std::invalid_argument("f_min must be non-negative");
  return std::sqrt(f_min / (static_cast<double>(n_cases) * static_cast<double>(n_equations)));
}

namespace {

Dataset permute_columns(const Dataset& data, std::uint64_t seed, std::size_t rep,
                        bool identity) {
  Dataset out = data;
  if (identity) return out;
  const std::size_t n = data.n_cases();
  for (std::size_t j = 0; j < data.n_columns(); ++j) {
    Rng rng(Rng::mix(Rng::mix(seed, rep), j));
    // Fisher-Yates on column j
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t k = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(out.a(i, j), out.a(k, j));
    }
  }
  return out;
}

}  // namespace

PermutationNull permutation_null_fit(const Model& model, const Dataset& data,
                                     WeightStrategy strategy, const EstimationConfig& cfg,
                                     std::size_t reps, std::uint64_t seed, std::size_t jobs,
                                     bool identity_debug) {
  PermutationNull out;
  const EstimationResult original = estimate(model, data, strategy, cfg);
  out.original_f_min = original.f_min;

  std::vector<double> samples(reps, -1.0);  // -1 marks failure
  parallel_for(jobs, reps, [&](std::size_t rep) {
    const Dataset permuted = permute_columns(data, seed, rep, identity_debug);
    try {
      samples[rep] = estimate(model, permuted, strategy, cfg).f_min;
    } catch (const std::exception&) {
      samples[rep] = -1.0;
    }
  });

  for (double s : samples) {
    if (s < 0.0) {
      ++out.failures;
      continue;
    }
    out.null_f_min.push_back(s);
    if (s < out.original_f_min) ++out.exceedance_count;
  }
  out.fraction_below = out.null_f_min.empty()
                           ? 0.0
                           : static_cast<double>(out.exceedance_count) /
                                 static_cast<double>(out.null_f_min.size());
  return out;
}

ChiSquareFit chi_square_stat(const Matrix& residuals, std::span<const double> variances,
                             std::size_t n_latent, std::size_t n_free_params, DfMode mode) {
  const std::size_t n = residuals.rows;
  const std::size_t m = residuals.cols;
  ChiSquareFit fit;
  for (std::size_t l = 0; l < m; ++l) {
    if (!(variances[l] > 0.0))
      throw std::invalid_argument("zero residual variance in equation " + std::to_string(l));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += residuals(i, l) * residuals(i, l);
    fit.statistic += acc / variances[l];
  }
  const double nm = static_cast<double>(n) * static_cast<double>(m);
  fit.df = mode == DfMode::equations
               ? nm
               : nm - static_cast<double>(n * n_latent + n_free_params);
  if (fit.df <= 0.0)
    throw std::invalid_argument("non-positive degrees of freedom; use df mode 'equations'");
  boost::math::chi_squared dist(fit.df);
  fit.p_value = boost::math::cdf(boost::math::complement(dist, fit.statistic));
  return fit;
}

ChiSquareFit chi_square_fit(const EstimationResult& result, DfMode mode) {
  return chi_square_stat(result.residuals, result.residual_variance,
                         result.latent_scores.cols, result.param_names.size(), mode);
}

}  // namespace clssem

#include "clssem/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "clssem/fit.hpp"

namespace clssem {

namespace {

// covariance with denominator n, matching the sum-over-cases constraints
Matrix column_covariance(const Matrix& x, const Matrix& y) {
  const std::size_t n = x.rows;
  Matrix cov(x.cols, y.cols);
  std::vector<double> mx(x.cols, 0.0), my(y.cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < x.cols; ++a) mx[a] += x(i, a);
    for (std::size_t b = 0; b < y.cols; ++b) my[b] += y(i, b);
  }
  for (double& v : mx) v /= static_cast<double>(n);
  for (double& v : my) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < x.cols; ++a) {
      const double cx = x(i, a) - mx[a];
      for (std::size_t b = 0; b < y.cols; ++b) cov(a, b) += cx * (y(i, b) - my[b]);
    }
  for (double& v : cov.v) v /= static_cast<double>(n);
  return cov;
}

// first indicator of a latent: the first manifest mentioned by the first
// single-latent equation containing it
std::size_t first_indicator(const Model& model, std::size_t q) {
  for (const Equation& eq : model.equations) {
    if (eq.latent_count() != 1 || eq.latents[0] != q) continue;
    std::vector<SymbolRef> refs;
    eq.residual.collect_symbols(refs);
    for (const SymbolRef& r : refs)
      if (r.kind == SymbolKind::manifest) return r.index;
  }
  return ConstraintDecl::npos;
}

}  // namespace

EstimationResult estimate(const Model& model, const Dataset& data, WeightStrategy strategy,
                          const EstimationConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  EstimationResult res;
  res.strategy = strategy;
  res.warnings = model.warnings;

  const std::size_t n = data.n_cases();
  const std::size_t q_count = model.n_latent();
  if (n < q_count + model.n_free_params())
    res.warnings.push_back("fewer cases than latent variables plus free parameters (n = " +
                           std::to_string(n) + "); estimates may be unstable");

  StrategyRun run;
  try {
    run = run_strategy(model, data, strategy, cfg);
  } catch (const OptimizationError& e) {
    throw EstimationError(std::string("optimization failed: ") + e.what());
  }

  Objective obj(model, data, run.weights, cfg.penalty);
  std::vector<double> u = obj.project(run.optim.u);

  // Latents scaled only by normalize() carry a sign convention: positive
  // covariance with their first indicator. Flip and re-polish when violated.
  bool flipped = false;
  const std::vector<std::size_t> cols = manifest_column_map(model, data);
  for (const ConstraintDecl& c : model.constraints) {
    if (c.kind != ConstraintKind::normalize) continue;
    const std::size_t q = c.latent;
    const std::size_t ind = first_indicator(model, q);
    if (ind == ConstraintDecl::npos) continue;
    double cov = 0.0, mean_z = 0.0, mean_x = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_z += u[obj.layout().latent_slot(i, q)];
      mean_x += data.a(i, cols[ind]);
    }
    mean_z /= static_cast<double>(n);
    mean_x /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      cov += (u[obj.layout().latent_slot(i, q)] - mean_z) * (data.a(i, cols[ind]) - mean_x);
    if (cov < 0.0) {
      for (std::size_t i = 0; i < n; ++i) u[obj.layout().latent_slot(i, q)] *= -1.0;
      flipped = true;
    }
  }
  if (flipped) {
    OptimizerConfig polish = cfg.opt;
    polish.multistarts = 1;
    OptimResult re = minimize(obj, polish, u);
    if (re.value <= run.optim.value * (1.0 + 1e-12) || re.value <= run.optim.value + 1e-12) {
      u = obj.project(re.u);
      run.optim.value = re.value;
      run.optim.converged = re.converged;
    }
    res.warnings.push_back("sign convention applied to normalize()-scaled latent scores");
  }

  // package estimates
  const UnknownLayout& layout = obj.layout();
  res.param_names.reserve(model.n_free_params());
  for (std::size_t j = 0; j < model.n_free_params(); ++j) {
    res.param_names.push_back(model.symbols.name_of(SymbolKind::param, model.free_params[j]));
    res.param_values.push_back(u[j]);
  }
  const std::vector<double> full =
      model.merge_params(std::span<const double>(u).first(layout.n_free));
  for (std::size_t s = 0; s < model.n_param(); ++s)
    res.all_params[model.symbols.name_of(SymbolKind::param, s)] = full[s];

  res.latent_names = model.symbols.names(SymbolKind::latent);
  res.latent_scores = Matrix(n, q_count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < q_count; ++q)
      res.latent_scores(i, q) = u[layout.latent_slot(i, q)];

  res.residuals = obj.residuals(u);
  res.residual_cov = column_covariance(res.residuals, res.residuals);
  res.residual_variance.resize(model.n_equations());
  for (std::size_t l = 0; l < model.n_equations(); ++l)
    res.residual_variance[l] = res.residual_cov(l, l);
  res.latent_error_cov = column_covariance(res.latent_scores, res.residuals);

  res.weights = run.weights;
  res.f_min = obj.value(u);
  res.fit_r = residual_mean_R(res.f_min, n, model.n_equations());

  res.optim = std::move(run.optim);
  res.optim.u = std::move(u);
  res.optim.value = res.f_min;
  res.wo_k = run.wo_k;
  res.wo_degenerate = run.wo_degenerate;
  res.wa_h = run.wa_h;
  res.wa_log = std::move(run.wa_log);
  for (const std::string& note : run.notes) res.warnings.push_back(note);

  if (cfg.compute_uniqueness && obj.dim() <= cfg.uniqueness_dim_cap)
    res.uniqueness = local_uniqueness(obj, res.optim.u);

  res.wall_time_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  return res;
}

std::pair<Matrix, Matrix> error_covariances(const EstimationResult& result) {
  return {column_covariance(result.residuals, result.residuals),
          column_covariance(result.latent_scores, result.residuals)};
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string result_to_json(const EstimationResult& result, int indent) {
  nlohmann::json j;
  j["params"] = nlohmann::json::object();
  for (std::size_t i = 0; i < result.param_names.size(); ++i)
    j["params"][result.param_names[i]] = result.param_values[i];
  j["fixed_params"] = nlohmann::json::object();
  for (const auto& [name, value] : result.all_params)
    if (std::find(result.param_names.begin(), result.param_names.end(), name) ==
        result.param_names.end())
      j["fixed_params"][name] = value;

  j["latent_scores"] = {{"columns", result.latent_names},
                        {"data", matrix_to_json(result.latent_scores)}};
  j["residuals"] = matrix_to_json(result.residuals);
  j["residual_cov"] = matrix_to_json(result.residual_cov);
  j["latent_error_cov"] = matrix_to_json(result.latent_error_cov);
  j["weights"] = result.weights;
  j["f_min"] = result.f_min;
  j["fit"] = {{"R", result.fit_r}};

  nlohmann::json starts = nlohmann::json::array();
  for (const StartRecord& s : result.optim.starts)
    starts.push_back({{"start", s.start_index},
                      {"value", std::isfinite(s.value) ? nlohmann::json(s.value)
                                                       : nlohmann::json("inf")},
                      {"converged", s.converged},
                      {"iterations", s.iterations},
                      {"stop_reason", s.stop_reason}});
  nlohmann::json diag = {{"strategy", to_string(result.strategy)},
                         {"converged", result.optim.converged},
                         {"best_start", result.optim.best_start},
                         {"starts", std::move(starts)},
                         {"uniqueness", to_string(result.uniqueness)},
                         {"wall_time_ms", result.wall_time_ms},
                         {"warnings", result.warnings}};
  if (result.strategy == WeightStrategy::wo) {
    diag["wo_k"] = result.wo_k;
    diag["wo_degenerate"] = result.wo_degenerate;
  }
  if (result.strategy == WeightStrategy::wa) {
    diag["wa_h"] = result.wa_h;
    nlohmann::json log = nlohmann::json::array();
    for (const WaEvalRecord& rec : result.wa_log)
      log.push_back({{"w", rec.w}, {"h", rec.h}, {"converged", rec.converged}});
    diag["wa_evaluations"] = std::move(log);
  }
  j["diagnostics"] = std::move(diag);
  return j.dump(indent);
}

}  // namespace clssem

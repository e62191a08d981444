#include "clssem/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace clssem {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

WeightStrategy parse_strategy(const std::string& name) {
  if (name == "w1") return WeightStrategy::w1;
  if (name == "wn") return WeightStrategy::wn;
  if (name == "ww") return WeightStrategy::ww;
  if (name == "wo") return WeightStrategy::wo;
  if (name == "wa") return WeightStrategy::wa;
  throw std::invalid_argument("unknown weight strategy '" + name +
                              "' (expected w1, wn, ww, wo or wa)");
}

const char* to_string(WeightStrategy s) {
  switch (s) {
    case WeightStrategy::w1: return "w1";
    case WeightStrategy::wn: return "wn";
    case WeightStrategy::ww: return "ww";
    case WeightStrategy::wo: return "wo";
    default: return "wa";
  }
}

std::vector<double> weights_w1(std::size_t n_equations) {
  return std::vector<double>(n_equations, 1.0);
}

std::vector<double> weights_wn(const Model& model, std::size_t n_cases) {
  std::vector<double> w;
  w.reserve(model.n_equations());
  for (const Equation& eq : model.equations)
    w.push_back(std::pow(static_cast<double>(n_cases), -static_cast<double>(eq.latent_count())));
  return w;
}

std::vector<double> residual_variances(const Matrix& eps, double variance_floor) {
  std::vector<double> var(eps.cols, 0.0);
  const double n = static_cast<double>(eps.rows);
  for (std::size_t l = 0; l < eps.cols; ++l) {
    double mean = 0.0;
    for (std::size_t i = 0; i < eps.rows; ++i) mean += eps(i, l);
    mean /= n;
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.rows; ++i) {
      const double c = eps(i, l) - mean;
      acc += c * c;
    }
    var[l] = std::max(acc / n, variance_floor);
  }
  return var;
}

double angle_h(std::span<const double> w, std::span<const double> sigma) {
  double dot = 0.0, nw = 0.0, nx = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    const double x = 1.0 / (sigma[l] * sigma[l]);
    dot += w[l] * x;
    nw += w[l] * w[l];
    nx += x * x;
  }
  return dot / (std::sqrt(nw) * std::sqrt(nx));
}

namespace {

StrategyRun run_fixed_weights(const Model& model, const Dataset& data,
                              std::vector<double> w, const EstimationConfig& cfg) {
  Objective obj(model, data, w, cfg.penalty);
  const std::vector<double> init = default_start(model, data);
  StrategyRun run;
  run.weights = std::move(w);
  run.optim = minimize(obj, cfg.opt, init);
  return run;
}

double variance_floor(const Objective& obj, const EstimationConfig& cfg) {
  const double scale = obj.data_variance_scale();
  return cfg.variance_floor_factor * (scale > 0.0 ? scale : 1.0);
}

}  // namespace

StrategyRun run_w1(const Model& model, const Dataset& data, const EstimationConfig& cfg) {
  return run_fixed_weights(model, data, weights_w1(model.n_equations()), cfg);
}

StrategyRun run_wn(const Model& model, const Dataset& data, const EstimationConfig& cfg) {
  return run_fixed_weights(model, data, weights_wn(model, data.n_cases()), cfg);
}

StrategyRun weights_ww(const Model& model, const Dataset& data, const EstimationConfig& cfg) {
  StrategyRun first = run_wn(model, data, cfg);
  Objective probe(model, data, first.weights, cfg.penalty);
  const double floor = variance_floor(probe, cfg);

  std::vector<double> u = first.optim.u;
  std::vector<double> w;
  const std::size_t rounds = cfg.ww_iterate ? std::max<std::size_t>(1, cfg.ww_iterations) : 1;
  StrategyRun run;
  for (std::size_t round = 0; round < rounds; ++round) {
    Objective stage(model, data, round == 0 ? first.weights : w, cfg.penalty);
    const std::vector<double> var = residual_variances(stage.residuals(u), floor);
    w.assign(var.size(), 0.0);
    for (std::size_t l = 0; l < var.size(); ++l) w[l] = 1.0 / var[l];

    Objective obj(model, data, w, cfg.penalty);
    run.optim = minimize(obj, cfg.opt, u);  // warm: perturbations around stage solution
    u = run.optim.u;
  }
  run.weights = std::move(w);
  return run;
}

// The extended objective F^(o)(u, w, K) = F_w(u) + P sum_l (w_l - K/var_l(u))^2
// has a degenerate global minimizer that puts all weight on one equation and
// drives its residual variance to zero. Joint gradient descent slides into it
// even from a good warm start, so the minimization runs as block-coordinate
// descent on the same function: a (w, K) step at fixed u, then a u step at
// fixed (w, K). With (w, K) held, the penalty is an outright barrier against
// variance collapse, which keeps the iteration at the interior self-consistent
// solution the warm start identifies.
StrategyRun weights_wo(const Model& model, const Dataset& data, const EstimationConfig& cfg) {
  const std::size_t m = model.n_equations();
  StrategyRun warm = weights_ww(model, data, cfg);

  Objective obj(model, data, weights_w1(m), cfg.penalty);
  if (obj.has_hard_constraints())
    throw OptimizationError("strategy wo does not support hard constraints");
  const double vfloor = variance_floor(obj, cfg);
  const double po = cfg.wo_penalty > 0.0 ? cfg.wo_penalty : obj.penalty();
  const double wfloor = cfg.weight_floor;
  const double span_scale = 1.0 - static_cast<double>(m) * wfloor;

  std::vector<double> u = warm.optim.u;
  std::vector<double> w = project_onto_simplex(warm.weights, wfloor);
  std::vector<double> var = residual_variances(obj.residuals(u), vfloor);
  double inv_sum = 0.0;
  for (double v : var) inv_sum += 1.0 / v;
  double K = 1.0 / inv_sum;

  auto weights_of = [&](std::span<const double> theta) {
    double t = 0.0;
    for (std::size_t l = 0; l < m; ++l) t += theta[l] * theta[l];
    std::vector<double> out(m);
    for (std::size_t l = 0; l < m; ++l)
      out[l] = wfloor + span_scale * theta[l] * theta[l] / t;
    return out;
  };

  OptimResult u_step;
  const std::size_t rounds = 3;
  for (std::size_t round = 0; round < rounds; ++round) {
    // ---- (w, K) step at fixed u: x = [theta_1..theta_m, kappa]
    const Matrix eps = obj.residuals(u);
    var = residual_variances(eps, vfloor);
    std::vector<double> sum_sq(m, 0.0);
    for (std::size_t i = 0; i < eps.rows; ++i)
      for (std::size_t l = 0; l < m; ++l) sum_sq[l] += eps(i, l) * eps(i, l);

    ObjectiveFn wk_step = [&](std::span<const double> x, std::vector<double>* grad) {
      const std::vector<double> wt = weights_of(x.first(m));
      const double kappa = x[m];
      const double k = kappa * kappa;
      double f = 0.0, pen = 0.0;
      std::vector<double> r(m);
      for (std::size_t l = 0; l < m; ++l) {
        f += wt[l] * sum_sq[l];
        r[l] = wt[l] - k / var[l];
        pen += r[l] * r[l];
      }
      if (grad != nullptr) {
        grad->assign(m + 1, 0.0);
        double t = 0.0;
        for (std::size_t l = 0; l < m; ++l) t += x[l] * x[l];
        std::vector<double> big_g(m);
        double g_mix = 0.0;
        for (std::size_t l = 0; l < m; ++l) {
          big_g[l] = sum_sq[l] + 2.0 * po * r[l];
          g_mix += big_g[l] * x[l] * x[l] / t;
        }
        for (std::size_t l = 0; l < m; ++l)
          (*grad)[l] = 2.0 * span_scale * x[l] / t * (big_g[l] - g_mix);
        double dk = 0.0;
        for (std::size_t l = 0; l < m; ++l) dk += r[l] / var[l];
        (*grad)[m] = -4.0 * kappa * po * dk;
      }
      return f + po * pen;
    };

    std::vector<double> x0(m + 1);
    for (std::size_t l = 0; l < m; ++l) x0[l] = std::sqrt(std::max(w[l] - wfloor, 1e-12));
    x0[m] = std::sqrt(K);
    OptimizerConfig wk_cfg = cfg.opt;
    wk_cfg.multistarts = 1;
    const OptimResult wk_res = minimize(wk_step, x0, wk_cfg);
    w = weights_of(std::span<const double>(wk_res.u).first(m));
    K = wk_res.u[m] * wk_res.u[m];

    // ---- u step at fixed (w, K): the K/var(u) penalty bars collapse
    ObjectiveFn u_fn = [&](std::span<const double> uu, std::vector<double>* grad) {
      if (grad == nullptr) {
        const double f_w = obj.value_with_weights(uu, w);
        if (!std::isfinite(f_w)) return f_w;
        const std::vector<double> v = residual_variances(obj.residuals(uu), vfloor);
        double pen = 0.0;
        for (std::size_t l = 0; l < m; ++l) {
          const double r = w[l] - K / v[l];
          pen += r * r;
        }
        return f_w + po * pen;
      }
      std::vector<double> gu;
      const double f_w = obj.value_and_gradient_with_weights(uu, w, gu);
      if (!std::isfinite(f_w)) return f_w;
      const std::vector<double> v = residual_variances(obj.residuals(uu), vfloor);
      double pen = 0.0;
      std::vector<double> lambda(m, 0.0);
      for (std::size_t l = 0; l < m; ++l) {
        const double r = w[l] - K / v[l];
        pen += r * r;
        if (v[l] > vfloor) lambda[l] = 2.0 * po * r * K / (v[l] * v[l]);
      }
      obj.accumulate_variance_gradient(uu, lambda, gu);
      *grad = std::move(gu);
      return f_w + po * pen;
    };
    OptimizerConfig u_cfg = cfg.opt;
    u_cfg.multistarts = 1;
    u_step = minimize(u_fn, u, u_cfg);
    u = u_step.u;
  }

  StrategyRun run;
  run.weights = w;
  run.wo_k = K;
  run.optim = std::move(u_step);
  run.optim.u = std::move(u);
  Objective final_obj(model, data, run.weights, cfg.penalty);
  run.optim.value = final_obj.value(run.optim.u);

  const double w_max = *std::max_element(run.weights.begin(), run.weights.end());
  std::size_t floored = 0;
  for (double wl : run.weights)
    if (wl <= 10.0 * wfloor) ++floored;
  if (m > 1 && (w_max > 0.99 || floored >= m - 1)) {
    run.wo_degenerate = true;
    run.notes.push_back(
        "wo: weights collapsed toward a single equation (degenerate minimizer)");
  }
  return run;
}

StrategyRun weights_wa(const Model& model, const Dataset& data, const EstimationConfig& cfg) {
  const std::size_t m = model.n_equations();
  const std::size_t budget = cfg.wa_budget > 0 ? cfg.wa_budget : cfg.opt.wa_budget;

  // base solution used to warm every inner minimization
  StrategyRun base = run_wn(model, data, cfg);
  Objective probe(model, data, weights_w1(m), cfg.penalty);
  const double vfloor = variance_floor(probe, cfg);

  StrategyRun run;
  OptimizerConfig inner_cfg = cfg.opt;
  inner_cfg.multistarts = 1;

  auto h_of = [&](std::span<const double> w) -> double {
    Objective obj(model, data, std::vector<double>(w.begin(), w.end()), cfg.penalty);
    const OptimResult inner = minimize(obj, inner_cfg, base.optim.u);
    WaEvalRecord rec;
    rec.w.assign(w.begin(), w.end());
    rec.converged = inner.converged;
    if (!inner.converged) {
      rec.h = -1.0;  // penalized, kept observable in the log
      run.wa_log.push_back(rec);
      return -1.0;
    }
    const std::vector<double> var = residual_variances(obj.residuals(inner.u), vfloor);
    std::vector<double> sigma(m);
    for (std::size_t l = 0; l < m; ++l) sigma[l] = std::sqrt(var[l]);
    rec.h = angle_h(w, sigma);
    run.wa_log.push_back(rec);
    return rec.h;
  };

  const SimplexResult sr =
      maximize_on_simplex(h_of, m, budget, cfg.opt.seed, cfg.weight_floor);

  run.weights = sr.w;
  Objective final_obj(model, data, run.weights, cfg.penalty);
  run.optim = minimize(final_obj, cfg.opt, base.optim.u);
  const std::vector<double> var = residual_variances(final_obj.residuals(run.optim.u), vfloor);
  std::vector<double> sigma(m);
  for (std::size_t l = 0; l < m; ++l) sigma[l] = std::sqrt(var[l]);
  run.wa_h = angle_h(run.weights, sigma);
  for (const WaEvalRecord& rec : run.wa_log)
    if (!rec.converged) {
      run.notes.push_back("wa: some inner minimizations did not converge");
      break;
    }
  return run;
}

StrategyRun run_strategy(const Model& model, const Dataset& data, WeightStrategy strategy,
                         const EstimationConfig& cfg) {
  switch (strategy) {
    case WeightStrategy::w1: return run_w1(model, data, cfg);
    case WeightStrategy::wn: return run_wn(model, data, cfg);
    case WeightStrategy::ww: return weights_ww(model, data, cfg);
    case WeightStrategy::wo: return weights_wo(model, data, cfg);
    default: return weights_wa(model, data, cfg);
  }
}

}  // namespace clssem

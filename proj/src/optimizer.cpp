#include "clssem/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <Eigen/Dense>

#include "clssem/rng.hpp"

namespace clssem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct LocalResult {
  std::vector<double> u;
  double value = kInf;
  bool converged = false;
  std::size_t iterations = 0;
  std::string stop_reason = "init";
};

// L-BFGS two-loop recursion with backtracking (Armijo) line search.
LocalResult lbfgs(const ObjectiveFn& f, std::vector<double> x, const OptimizerConfig& cfg) {
  const std::size_t dim = x.size();
  LocalResult res;

  std::vector<double> g;
  double fx = f(x, &g);
  if (!std::isfinite(fx)) {
    res.u = std::move(x);
    res.value = fx;
    res.stop_reason = "non-finite at start";
    return res;
  }

  const double g0_norm = norm2(g);
  const double g_tol = cfg.gradient_tolerance * std::max(1.0, g0_norm);
  // once f stops changing in double precision nothing tighter is reachable;
  // accept a near-tolerance gradient in that case
  const double g_tol_stagnant = std::max(g_tol, 1e-7 * std::max(1.0, g0_norm));

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> d(dim), x_new(dim), g_new, alpha_buf;

  std::size_t stagnant = 0;

  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    const double g_norm = norm2(g);
    if (g_norm <= g_tol) {
      res.converged = true;
      res.iterations = iter;
      res.stop_reason = "gradient tolerance";
      res.u = std::move(x);
      res.value = fx;
      return res;
    }

    // two-loop recursion: d = -H g
    d.assign(g.begin(), g.end());
    alpha_buf.assign(s_hist.size(), 0.0);
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha_buf[k] = rho_hist[k] * dot(s_hist[k], d);
      for (std::size_t j = 0; j < dim; ++j) d[j] -= alpha_buf[k] * y_hist[k][j];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], d);
      for (std::size_t j = 0; j < dim; ++j) d[j] += (alpha_buf[k] - beta) * s_hist[k][j];
    }
    for (double& v : d) v = -v;

    double gd = dot(g, d);
    if (!(gd < 0.0)) {  // not a descent direction; fall back to steepest descent
      for (std::size_t j = 0; j < dim; ++j) d[j] = -g[j];
      gd = -g_norm * g_norm;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // backtracking line search
    double alpha = s_hist.empty() ? std::min(1.0, 1.0 / std::max(1.0, g_norm)) : 1.0;
    double f_trial = kInf;
    bool accepted = false;
    for (std::size_t ls = 0; ls < cfg.max_line_search_steps; ++ls) {
      for (std::size_t j = 0; j < dim; ++j) x_new[j] = x[j] + alpha * d[j];
      f_trial = f(x_new, nullptr);
      if (std::isfinite(f_trial) && f_trial <= fx + cfg.armijo_c1 * alpha * gd) {
        accepted = true;
        break;
      }
      alpha *= cfg.backtrack_factor;
    }
    if (!accepted) {
      // At kinks of abs/theta a strictly decreasing step may not satisfy
      // Armijo; accept simple decrease, otherwise give up.
      if (std::isfinite(f_trial) && f_trial < fx) {
        accepted = true;
      } else {
        res.iterations = iter;
        res.stop_reason = "line search failure";
        res.u = std::move(x);
        res.value = fx;
        res.converged = norm2(g) <= g_tol_stagnant;
        return res;
      }
    }

    const double f_prev = fx;
    fx = f(x_new, &g_new);

    // curvature pair
    std::vector<double> s(dim), y(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      s[j] = x_new[j] - x[j];
      y[j] = g_new[j] - g[j];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * norm2(s) * norm2(y)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > cfg.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    x.swap(x_new);
    g.swap(g_new);

    if (std::abs(f_prev - fx) <= 1e-16 * std::max(1.0, std::abs(fx)))
      ++stagnant;
    else
      stagnant = 0;
    if (stagnant >= 3) {
      res.iterations = iter + 1;
      res.stop_reason = "stagnated";
      res.u = std::move(x);
      res.value = fx;
      res.converged = norm2(g) <= g_tol_stagnant;
      return res;
    }
  }

  res.iterations = cfg.max_iterations;
  res.stop_reason = "max iterations";
  res.u = std::move(x);
  res.value = fx;
  res.converged = norm2(g) <= g_tol;
  return res;
}

std::vector<double> perturb_start(std::span<const double> init, double sd, Rng& rng) {
  std::vector<double> x(init.begin(), init.end());
  for (double& v : x) v += sd * std::max(1.0, std::abs(v)) * rng.normal();
  return x;
}

}  // namespace

OptimResult minimize(const ObjectiveFn& f, std::span<const double> init,
                     const OptimizerConfig& cfg) {
  if (init.empty()) throw OptimizationError("empty unknown vector");
  const std::size_t n_starts = std::max<std::size_t>(1, cfg.multistarts);

  std::vector<LocalResult> locals(n_starts);
  std::vector<bool> start_ok(n_starts, false);

  auto run_start = [&](std::size_t k) {
    std::vector<double> x0(init.begin(), init.end());
    Rng rng(Rng::mix(cfg.seed, 0x5741525453ULL + k));
    if (k > 0) x0 = perturb_start(init, cfg.start_noise_sd, rng);
    for (std::size_t attempt = 0; attempt < 50; ++attempt) {
      if (std::isfinite(f(x0, nullptr))) {
        start_ok[k] = true;
        break;
      }
      x0 = perturb_start(init, cfg.start_noise_sd, rng);
    }
    if (start_ok[k]) locals[k] = lbfgs(f, std::move(x0), cfg);
  };

  if (cfg.parallel_starts && cfg.jobs > 1 && n_starts > 1) {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    const std::size_t workers = std::min(cfg.jobs, n_starts);
    std::mutex mtx;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard<std::mutex> lock(mtx);
            if (next >= n_starts) return;
            k = next++;
          }
          run_start(k);
        }
      });
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t k = 0; k < n_starts; ++k) run_start(k);
  }

  OptimResult out;
  out.starts.reserve(n_starts);
  std::size_t best = n_starts;
  for (std::size_t k = 0; k < n_starts; ++k) {
    StartRecord rec;
    rec.start_index = k;
    if (!start_ok[k]) {
      rec.value = kInf;
      rec.stop_reason = "initialization non-finite";
    } else {
      rec.value = locals[k].value;
      rec.converged = locals[k].converged;
      rec.iterations = locals[k].iterations;
      rec.stop_reason = locals[k].stop_reason;
      if (best == n_starts || locals[k].value < locals[best].value) best = k;
    }
    out.starts.push_back(std::move(rec));
  }
  if (best == n_starts)
    throw OptimizationError("all multistart initializations were non-finite");

  out.u = std::move(locals[best].u);
  out.value = locals[best].value;
  out.converged = locals[best].converged;
  out.best_start = best;
  return out;
}

OptimResult minimize(const Objective& obj, const OptimizerConfig& cfg,
                     std::span<const double> init) {
  ObjectiveFn f = [&obj](std::span<const double> u, std::vector<double>* grad) {
    if (grad == nullptr) return obj.value(u);
    return obj.value_and_gradient(u, *grad);
  };
  return minimize(f, init, cfg);
}

namespace {

// Flattens nested multiplication chains: factors(a*b*c) = {a, b, c}.
void collect_factors(const Expr& e, std::int32_t idx, std::vector<std::int32_t>& out) {
  const Expr::Node& n = e.nodes()[idx];
  if (n.op == Expr::Op::mul) {
    collect_factors(e, n.a, out);
    collect_factors(e, n.b, out);
  } else {
    out.push_back(idx);
  }
}

bool subtree_has_latent(const Expr& e, std::int32_t idx) {
  const Expr::Node& n = e.nodes()[idx];
  if (n.op == Expr::Op::latent) return true;
  if (n.a >= 0 && subtree_has_latent(e, n.a)) return true;
  if (n.b >= 0 && subtree_has_latent(e, n.b)) return true;
  return false;
}

// A parameter is loading-like when, inside a single-latent equation, it is a
// direct factor of a product that also contains the latent.
void mark_loadings(const Expr& e, std::int32_t idx, std::vector<bool>& loading) {
  const Expr::Node& n = e.nodes()[idx];
  if (n.op == Expr::Op::mul) {
    std::vector<std::int32_t> factors;
    collect_factors(e, idx, factors);
    bool has_latent = false;
    for (std::int32_t f : factors) has_latent = has_latent || subtree_has_latent(e, f);
    for (std::int32_t f : factors) {
      const Expr::Node& fn = e.nodes()[f];
      if (fn.op == Expr::Op::param && has_latent) loading[fn.sym] = true;
      if (fn.a >= 0) mark_loadings(e, f, loading);
    }
    return;
  }
  if (n.a >= 0) mark_loadings(e, n.a, loading);
  if (n.b >= 0) mark_loadings(e, n.b, loading);
}

}  // namespace

std::vector<double> default_start(const Model& model, const Dataset& data) {
  const std::size_t n = data.n_cases();
  const UnknownLayout layout = free_unknowns(model, n);
  std::vector<double> u(layout.size(), 0.0);
  const std::vector<std::size_t> cols = manifest_column_map(model, data);

  std::vector<bool> loading(model.n_param(), false);
  for (const Equation& eq : model.equations)
    if (eq.latent_count() == 1 && !eq.residual.empty())
      mark_loadings(eq.residual, eq.residual.root(), loading);
  for (std::size_t j = 0; j < layout.n_free; ++j)
    u[j] = loading[model.free_params[j]] ? 1.0 : 0.0;

  for (std::size_t q = 0; q < model.n_latent(); ++q) {
    // first single-latent equation that mentions this latent and a manifest
    std::size_t indicator = ConstraintDecl::npos;
    for (const Equation& eq : model.equations) {
      if (eq.latent_count() != 1 || eq.latents[0] != q) continue;
      std::vector<SymbolRef> refs;
      eq.residual.collect_symbols(refs);
      for (const SymbolRef& r : refs)
        if (r.kind == SymbolKind::manifest) {
          indicator = r.index;
          break;
        }
      if (indicator != ConstraintDecl::npos) break;
    }
    if (indicator == ConstraintDecl::npos) continue;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data.a(i, cols[indicator]);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      u[layout.latent_slot(i, q)] = data.a(i, cols[indicator]) - mean;
  }
  return u;
}

// ---------------------------------------------------------------------------
// Hessian definiteness

std::string to_string(Definiteness d) {
  switch (d) {
    case Definiteness::positive_definite: return "positive-definite";
    case Definiteness::semi_definite: return "semi-definite";
    case Definiteness::indefinite: return "indefinite";
    default: return "unknown";
  }
}

namespace {

// Directions removed by hard constraints carry no curvature by construction;
// deflate them so they do not show up as spurious null directions.
void deflate_hard_directions(const Objective& obj, std::span<const double> u,
                             Eigen::MatrixXd& h) {
  const Model& m = obj.model();
  const UnknownLayout& layout = obj.layout();
  const double shift = 10.0 * std::max(1.0, h.cwiseAbs().maxCoeff());
  for (const ConstraintDecl& c : m.constraints) {
    if (c.mode != ConstraintMode::hard) continue;
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(h.rows());
    if (c.kind == ConstraintKind::center) {
      for (std::size_t i = 0; i < layout.n_cases; ++i)
        dir[static_cast<Eigen::Index>(layout.latent_slot(i, c.latent))] = 1.0;
    } else if (c.kind == ConstraintKind::normalize) {
      for (std::size_t i = 0; i < layout.n_cases; ++i) {
        const std::size_t slot = layout.latent_slot(i, c.latent);
        dir[static_cast<Eigen::Index>(slot)] = u[slot];
      }
    }
    const double n = dir.norm();
    if (n > 0.0) {
      dir /= n;
      h += shift * dir * dir.transpose();
    }
  }
}

Definiteness classify(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) return Definiteness::unknown;
  const Eigen::VectorXd& ev = solver.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  const double tol = 1e-7 * scale;
  if (ev.minCoeff() > tol) return Definiteness::positive_definite;
  if (ev.minCoeff() >= -tol) return Definiteness::semi_definite;
  return Definiteness::indefinite;
}

}  // namespace

Definiteness local_uniqueness(const Objective& obj, std::span<const double> u) {
  const std::size_t dim = obj.dim();
  if (dim > 2000) return Definiteness::unknown;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);

  if (dim <= 200) {
    // exact symmetric finite-difference Hessian of the analytic gradient
    std::vector<double> x(u.begin(), u.end());
    std::vector<double> gp, gm;
    for (std::size_t j = 0; j < dim; ++j) {
      const double hstep = 1e-5 * std::max(1.0, std::abs(x[j]));
      const double saved = x[j];
      x[j] = saved + hstep;
      const double fp = obj.value_and_gradient(x, gp);
      x[j] = saved - hstep;
      const double fm = obj.value_and_gradient(x, gm);
      x[j] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) return Definiteness::unknown;
      for (std::size_t a = 0; a < dim; ++a)
        h(a, j) = (gp[a] - gm[a]) / (2.0 * hstep);
    }
    h = 0.5 * (h + h.transpose()).eval();
  } else {
    std::vector<double> buf;
    obj.accumulate_gauss_newton(u, buf);
    h = Eigen::Map<Eigen::MatrixXd>(buf.data(), dim, dim);  // symmetric, order moot
  }

  deflate_hard_directions(obj, u, h);
  return classify(h);
}

// ---------------------------------------------------------------------------
// Simplex maximization

std::vector<double> project_onto_simplex(std::span<const double> w, double floor) {
  const std::size_t m = w.size();
  const double target = 1.0 - floor * static_cast<double>(m);
  if (target <= 0.0) throw OptimizationError("simplex floor too large for dimension");
  std::vector<double> z(m);
  for (std::size_t l = 0; l < m; ++l) z[l] = w[l] - floor;

  std::vector<double> sorted(z);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cumsum = 0.0, tau = 0.0;
  std::size_t k = 0;
  for (std::size_t j = 0; j < m; ++j) {
    cumsum += sorted[j];
    const double t = (cumsum - target) / static_cast<double>(j + 1);
    if (sorted[j] - t > 0.0) {
      tau = t;
      k = j + 1;
    }
  }
  (void)k;
  std::vector<double> out(m);
  for (std::size_t l = 0; l < m; ++l) out[l] = floor + std::max(0.0, z[l] - tau);
  return out;
}

// Nelder-Mead runs in orthonormal coordinates of the sum-to-one plane (a
// Helmert basis); full m-space vertices would be degenerate there. Points map
// to weights via projection onto the floored simplex before every evaluation.
SimplexResult maximize_on_simplex(const std::function<double(std::span<const double>)>& f,
                                  std::size_t m, std::size_t budget, std::uint64_t seed,
                                  double floor, std::span<const double> start) {
  SimplexResult result;
  if (m == 0) throw OptimizationError("weight dimension must be >= 1");
  if (m == 1) {
    result.w = {1.0};
    result.value = 0.0;
    return result;
  }

  const std::size_t d = m - 1;
  std::vector<std::vector<double>> basis(d, std::vector<double>(m, 0.0));
  for (std::size_t j = 0; j < d; ++j) {
    const double s = 1.0 / std::sqrt(static_cast<double>((j + 1) * (j + 2)));
    for (std::size_t l = 0; l <= j; ++l) basis[j][l] = s;
    basis[j][j + 1] = -static_cast<double>(j + 1) * s;
  }

  std::vector<double> w0;
  if (!start.empty())
    w0 = project_onto_simplex(start, floor);
  else
    w0.assign(m, 1.0 / static_cast<double>(m));

  auto to_weights = [&](const std::vector<double>& v) {
    std::vector<double> w = w0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t l = 0; l < m; ++l) w[l] += v[j] * basis[j][l];
    return project_onto_simplex(w, floor);
  };

  std::size_t evals = 0;
  std::vector<double> best_w = w0;
  double best_phi = kInf;
  auto phi = [&](const std::vector<double>& v) {  // minimized
    ++evals;
    const std::vector<double> w = to_weights(v);
    const double fv = f(w);
    const double p = std::isfinite(fv) ? -fv : kInf;
    if (p < best_phi) {
      best_phi = p;
      best_w = w;
    }
    return p;
  };

  struct Vertex {
    std::vector<double> v;
    double fv;
  };
  std::vector<Vertex> simplex;
  Rng rng(Rng::mix(seed, 0x53494d504cULL));

  auto build_simplex = [&](const std::vector<double>& center, double delta) {
    simplex.clear();
    simplex.push_back(Vertex{center, phi(center)});
    for (std::size_t j = 0; j < d && evals < budget; ++j) {
      std::vector<double> v = center;
      v[j] += delta * (rng.uniform() > 0.5 ? 1.0 : -1.0);
      simplex.push_back(Vertex{std::move(v), 0.0});
      simplex.back().fv = phi(simplex.back().v);
    }
  };

  double delta = 0.5 / static_cast<double>(m);
  build_simplex(std::vector<double>(d, 0.0), delta);

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  while (evals < budget && simplex.size() == d + 1) {
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.fv < b.fv; });
    const double spread = std::abs(simplex.back().fv - simplex.front().fv);
    double diameter = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      diameter = std::max(diameter, std::abs(simplex.back().v[j] - simplex.front().v[j]));
    if (spread <= 1e-15 * (1.0 + std::abs(simplex.front().fv)) && diameter <= 1e-10) {
      delta *= 0.25;  // restart tighter around the incumbent
      if (delta < 1e-10) break;
      build_simplex(simplex.front().v, delta);
      continue;
    }

    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k + 1 < simplex.size(); ++k)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[k].v[j];
    for (double& c : centroid) c /= static_cast<double>(d);

    const Vertex& worst = simplex.back();
    std::vector<double> xr(d);
    for (std::size_t j = 0; j < d; ++j)
      xr[j] = centroid[j] + alpha * (centroid[j] - worst.v[j]);
    const double fr = phi(xr);

    if (fr < simplex.front().fv && evals < budget) {
      std::vector<double> xe(d);
      for (std::size_t j = 0; j < d; ++j) xe[j] = centroid[j] + gamma * (xr[j] - centroid[j]);
      const double fe = phi(xe);
      simplex.back() = fe < fr ? Vertex{std::move(xe), fe} : Vertex{std::move(xr), fr};
      continue;
    }
    if (fr < simplex[simplex.size() - 2].fv) {
      simplex.back() = Vertex{std::move(xr), fr};
      continue;
    }
    if (evals >= budget) break;
    std::vector<double> xc(d);
    const std::vector<double>& base = fr < worst.fv ? xr : worst.v;
    for (std::size_t j = 0; j < d; ++j) xc[j] = centroid[j] + rho * (base[j] - centroid[j]);
    const double fc = phi(xc);
    if (fc < std::min(fr, worst.fv)) {
      simplex.back() = Vertex{std::move(xc), fc};
      continue;
    }
    for (std::size_t k = 1; k < simplex.size() && evals < budget; ++k) {
      for (std::size_t j = 0; j < d; ++j)
        simplex[k].v[j] = simplex[0].v[j] + sigma * (simplex[k].v[j] - simplex[0].v[j]);
      simplex[k].fv = phi(simplex[k].v);
    }
  }

  result.w = best_w;
  result.value = -best_phi;
  result.evaluations = evals;
  result.budget_exhausted = evals >= budget;
  return result;
}

}  // namespace clssem

#include "clssem/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace clssem {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Objective::Objective(const Model& model, const Dataset& data, std::vector<double> weights,
                     double penalty)
    : model_(&model), weights_(std::move(weights)) {
  if (weights_.size() != model.n_equations())
    throw std::invalid_argument("weight vector length must equal the equation count");
  for (double w : weights_)
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("equation weights must be positive and finite");

  const std::vector<std::size_t> cols = manifest_column_map(model, data);
  const std::size_t n = data.n_cases();
  const std::size_t k = model.n_manifest();
  data_ = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) data_(i, j) = data.a(i, cols[j]);

  layout_ = free_unknowns(model, n);

  double sum_sq = 0.0;
  for (double v : data_.v) sum_sq += v * v;
  data_scale_ = data_.v.empty() ? 0.0 : sum_sq / static_cast<double>(data_.v.size());

  double var_sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0, msq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data_(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = data_(i, j) - mean;
      msq += c * c;
    }
    var_sum += msq / static_cast<double>(n);
  }
  data_var_scale_ = k > 0 ? var_sum / static_cast<double>(k) : 0.0;

  penalty_ = penalty > 0.0
                 ? penalty
                 : 1e3 * static_cast<double>(model.n_equations()) * static_cast<double>(n) *
                       (data_scale_ > 0.0 ? data_scale_ : 1.0);

  for (const ConstraintDecl& c : model.constraints) {
    if (c.mode == ConstraintMode::hard) has_hard_ = true;
    if (c.kind == ConstraintKind::zero_error_cov ||
        c.kind == ConstraintKind::zero_latent_error_cov)
      has_residual_constraints_ = true;
  }
}

std::vector<double> Objective::project(std::span<const double> u) const {
  std::vector<double> out(u.begin(), u.end());
  if (!has_hard_) return out;
  const std::size_t n = layout_.n_cases;
  for (const ConstraintDecl& c : model_->constraints) {
    if (c.mode != ConstraintMode::hard) continue;
    if (c.kind == ConstraintKind::center) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += out[layout_.latent_slot(i, c.latent)];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) out[layout_.latent_slot(i, c.latent)] -= mean;
    } else if (c.kind == ConstraintKind::normalize) {
      double norm_sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double z = out[layout_.latent_slot(i, c.latent)];
        norm_sq += z * z;
      }
      if (norm_sq > 0.0) {
        const double scale = std::sqrt(static_cast<double>(n) / norm_sq);
        for (std::size_t i = 0; i < n; ++i) out[layout_.latent_slot(i, c.latent)] *= scale;
      }
    }
  }
  return out;
}

double Objective::value(std::span<const double> u) const {
  return evaluate(u, nullptr, weights_);
}

double Objective::value_and_gradient(std::span<const double> u,
                                     std::vector<double>& grad) const {
  grad.assign(dim(), 0.0);
  return evaluate(u, &grad, weights_);
}

double Objective::value_with_weights(std::span<const double> u,
                                     std::span<const double> w) const {
  return evaluate(u, nullptr, w);
}

double Objective::value_and_gradient_with_weights(std::span<const double> u,
                                                  std::span<const double> w,
                                                  std::vector<double>& grad) const {
  grad.assign(dim(), 0.0);
  return evaluate(u, &grad, w);
}

void Objective::accumulate_variance_gradient(std::span<const double> u,
                                             std::span<const double> lambda,
                                             std::vector<double>& grad) const {
  if (has_hard_)
    throw std::logic_error("variance gradients are not supported with hard constraints");
  const Model& m = *model_;
  const std::size_t n = layout_.n_cases;
  const Matrix eps = residuals(u);
  std::vector<double> means(m.n_equations(), 0.0);
  for (std::size_t l = 0; l < m.n_equations(); ++l) {
    for (std::size_t i = 0; i < n; ++i) means[l] += eps(i, l);
    means[l] /= static_cast<double>(n);
  }
  const std::vector<double> params =
      m.merge_params(std::span<const double>(u).first(layout_.n_free));
  std::vector<double> values, dpar(m.n_param());
  for (std::size_t i = 0; i < n; ++i) {
    CaseBindings row{
        std::span<const double>(data_.row(i), data_.cols),
        std::span<const double>(u.data() + layout_.latent_slot(i, 0), layout_.n_latent),
        params};
    std::fill(dpar.begin(), dpar.end(), 0.0);
    std::span<double> dlat(grad.data() + layout_.latent_slot(i, 0), layout_.n_latent);
    for (std::size_t l = 0; l < m.n_equations(); ++l) {
      if (lambda[l] == 0.0) continue;
      // d var_l / d eps_il = 2 (eps_il - mean_l) / n
      const double seed = lambda[l] * 2.0 * (eps(i, l) - means[l]) / static_cast<double>(n);
      if (seed == 0.0) continue;
      m.equations[l].residual.eval(row, values);
      m.equations[l].residual.backprop(values, seed, {}, dlat, dpar);
    }
    for (std::size_t j = 0; j < layout_.n_free; ++j) grad[j] += dpar[m.free_params[j]];
  }
}

Matrix Objective::residuals(std::span<const double> u) const {
  const Model& m = *model_;
  const std::size_t n = layout_.n_cases;
  const std::vector<double> pu = project(u);
  const std::vector<double> params =
      m.merge_params(std::span<const double>(pu).first(layout_.n_free));
  Matrix eps(n, m.n_equations());
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    CaseBindings row{
        std::span<const double>(data_.row(i), data_.cols),
        std::span<const double>(pu.data() + layout_.latent_slot(i, 0), layout_.n_latent),
        params};
    for (std::size_t l = 0; l < m.n_equations(); ++l)
      eps(i, l) = m.equations[l].residual.eval(row, values);
  }
  return eps;
}

void Objective::accumulate_gauss_newton(std::span<const double> u,
                                        std::vector<double>& h) const {
  const Model& m = *model_;
  const std::size_t n = layout_.n_cases;
  const std::size_t dim = layout_.size();
  h.assign(dim * dim, 0.0);

  const std::vector<double> pu = project(u);
  const std::vector<double> params =
      m.merge_params(std::span<const double>(pu).first(layout_.n_free));

  std::vector<std::size_t> free_ordinal(m.n_param(), ConstraintDecl::npos);
  for (std::size_t j = 0; j < m.free_params.size(); ++j) free_ordinal[m.free_params[j]] = j;

  Matrix eps;
  if (has_residual_constraints_) eps = residuals(pu);

  std::vector<double> values, dlat(layout_.n_latent), dpar(m.n_param());
  std::vector<std::size_t> slots;
  std::vector<double> coefs;
  std::vector<std::vector<double>> cons_grad;  // dense grad of each soft constraint sum
  std::vector<std::size_t> cons_index;
  for (std::size_t ci = 0; ci < m.constraints.size(); ++ci)
    if (m.constraints[ci].mode == ConstraintMode::soft) {
      cons_index.push_back(ci);
      cons_grad.emplace_back(dim, 0.0);
    }

  for (std::size_t i = 0; i < n; ++i) {
    CaseBindings row{
        std::span<const double>(data_.row(i), data_.cols),
        std::span<const double>(pu.data() + layout_.latent_slot(i, 0), layout_.n_latent),
        params};
    for (std::size_t l = 0; l < m.n_equations(); ++l) {
      std::fill(dlat.begin(), dlat.end(), 0.0);
      std::fill(dpar.begin(), dpar.end(), 0.0);
      m.equations[l].residual.eval(row, values);
      m.equations[l].residual.backprop(values, 1.0, {}, dlat, dpar);

      slots.clear();
      coefs.clear();
      for (std::size_t s = 0; s < m.n_param(); ++s)
        if (dpar[s] != 0.0 && free_ordinal[s] != ConstraintDecl::npos) {
          slots.push_back(free_ordinal[s]);
          coefs.push_back(dpar[s]);
        }
      for (std::size_t q : m.equations[l].latents)
        if (dlat[q] != 0.0) {
          slots.push_back(layout_.latent_slot(i, q));
          coefs.push_back(dlat[q]);
        }
      const double w2 = 2.0 * weights_[l];
      for (std::size_t a = 0; a < slots.size(); ++a)
        for (std::size_t b = 0; b < slots.size(); ++b)
          h[slots[a] * dim + slots[b]] += w2 * coefs[a] * coefs[b];

      // residual-coupled constraint gradients reuse the same backprop
      for (std::size_t cg = 0; cg < cons_index.size(); ++cg) {
        const ConstraintDecl& c = m.constraints[cons_index[cg]];
        double factor = 0.0;
        if (c.kind == ConstraintKind::zero_error_cov) {
          if (c.eq_a == l) factor += eps(i, c.eq_b);
          if (c.eq_b == l) factor += eps(i, c.eq_a);
        } else if (c.kind == ConstraintKind::zero_latent_error_cov && c.eq_a == l) {
          factor = pu[layout_.latent_slot(i, c.latent)];
        }
        if (factor != 0.0)
          for (std::size_t a = 0; a < slots.size(); ++a)
            cons_grad[cg][slots[a]] += factor * coefs[a];
      }
    }
  }

  for (std::size_t cg = 0; cg < cons_index.size(); ++cg) {
    const ConstraintDecl& c = m.constraints[cons_index[cg]];
    std::vector<double>& g = cons_grad[cg];
    if (c.kind == ConstraintKind::center) {
      for (std::size_t i = 0; i < n; ++i) g[layout_.latent_slot(i, c.latent)] += 1.0;
    } else if (c.kind == ConstraintKind::normalize) {
      for (std::size_t i = 0; i < n; ++i)
        g[layout_.latent_slot(i, c.latent)] += 2.0 * pu[layout_.latent_slot(i, c.latent)];
    } else if (c.kind == ConstraintKind::zero_latent_error_cov) {
      for (std::size_t i = 0; i < n; ++i)
        g[layout_.latent_slot(i, c.latent)] += eps(i, c.eq_a);
    }
    for (std::size_t a = 0; a < dim; ++a) {
      if (g[a] == 0.0) continue;
      const double ga2p = 2.0 * penalty_ * g[a];
      for (std::size_t b = 0; b < dim; ++b) h[a * dim + b] += ga2p * g[b];
    }
  }
}

// Single implementation behind value() and value_and_gradient(). The gradient
// accumulates per case: equation backprops write latent adjoints straight into
// the gradient slice of that case and parameter adjoints into a scratch that
// is scattered onto the free-parameter slots once per case.
double Objective::evaluate(std::span<const double> u, std::vector<double>* grad,
                           std::span<const double> w) const {
  const Model& m = *model_;
  const std::size_t n = layout_.n_cases;
  const std::size_t n_eq = m.n_equations();
  const std::size_t n_lat = layout_.n_latent;
  const std::size_t n_par = m.n_param();

  // Hard-constraint projection; stage snapshots are needed to pull the
  // gradient back through the projection chain afterwards.
  struct Stage {
    const ConstraintDecl* c;
    double norm_sq;               // normalize only
    std::vector<double> pre_col;  // normalize only: column before scaling
  };
  std::vector<Stage> stages;
  std::vector<double> pu(u.begin(), u.end());
  if (has_hard_) {
    for (const ConstraintDecl& c : m.constraints) {
      if (c.mode != ConstraintMode::hard) continue;
      if (c.kind == ConstraintKind::center) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += pu[layout_.latent_slot(i, c.latent)];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) pu[layout_.latent_slot(i, c.latent)] -= mean;
        stages.push_back(Stage{&c, 0.0, {}});
      } else if (c.kind == ConstraintKind::normalize) {
        Stage st{&c, 0.0, std::vector<double>(n)};
        for (std::size_t i = 0; i < n; ++i) {
          st.pre_col[i] = pu[layout_.latent_slot(i, c.latent)];
          st.norm_sq += st.pre_col[i] * st.pre_col[i];
        }
        if (st.norm_sq > 0.0) {
          const double scale = std::sqrt(static_cast<double>(n) / st.norm_sq);
          for (std::size_t i = 0; i < n; ++i) pu[layout_.latent_slot(i, c.latent)] *= scale;
        }
        stages.push_back(std::move(st));
      }
    }
  }

  const std::vector<double> params =
      m.merge_params(std::span<const double>(pu).first(layout_.n_free));

  double f = 0.0;
  std::vector<double> values;
  std::vector<double> dpar(grad != nullptr ? n_par : 0, 0.0);

  // Residual-coupled constraints need the full residual matrix first; the
  // common path (none declared) is a fused forward+backward sweep.
  Matrix eps;
  std::vector<double> cons_sum(m.constraints.size(), 0.0);
  if (has_residual_constraints_) {
    eps = residuals(pu);
    bool finite = true;
    for (double e : eps.v) finite = finite && std::isfinite(e);
    if (!finite) return kInf;
  }
  for (std::size_t ci = 0; ci < m.constraints.size(); ++ci) {
    const ConstraintDecl& c = m.constraints[ci];
    if (c.mode == ConstraintMode::hard) continue;
    double s = 0.0;
    switch (c.kind) {
      case ConstraintKind::center:
        for (std::size_t i = 0; i < n; ++i) s += pu[layout_.latent_slot(i, c.latent)];
        break;
      case ConstraintKind::normalize:
        for (std::size_t i = 0; i < n; ++i) {
          const double z = pu[layout_.latent_slot(i, c.latent)];
          s += z * z;
        }
        s -= static_cast<double>(n);
        break;
      case ConstraintKind::zero_error_cov:
        for (std::size_t i = 0; i < n; ++i) s += eps(i, c.eq_a) * eps(i, c.eq_b);
        break;
      case ConstraintKind::zero_latent_error_cov:
        for (std::size_t i = 0; i < n; ++i)
          s += pu[layout_.latent_slot(i, c.latent)] * eps(i, c.eq_a);
        break;
    }
    cons_sum[ci] = s;
    f += penalty_ * s * s;
  }

  for (std::size_t i = 0; i < n; ++i) {
    CaseBindings row{
        std::span<const double>(data_.row(i), data_.cols),
        std::span<const double>(pu.data() + layout_.latent_slot(i, 0), n_lat),
        params};
    std::span<double> dlat;
    if (grad != nullptr) {
      std::fill(dpar.begin(), dpar.end(), 0.0);
      dlat = std::span<double>(grad->data() + layout_.latent_slot(i, 0), n_lat);
    }
    for (std::size_t l = 0; l < n_eq; ++l) {
      const double r = m.equations[l].residual.eval(row, values);
      if (!std::isfinite(r)) return kInf;
      f += w[l] * r * r;
      if (grad == nullptr) continue;
      // seed = dF/d(eps_{i,l}) from the weighted squares plus any
      // residual-coupled penalty terms that contain eps_{i,l}
      double seed = 2.0 * w[l] * r;
      if (has_residual_constraints_) {
        for (std::size_t ci = 0; ci < m.constraints.size(); ++ci) {
          const ConstraintDecl& c = m.constraints[ci];
          if (c.kind == ConstraintKind::zero_error_cov) {
            if (c.eq_a == l) seed += 2.0 * penalty_ * cons_sum[ci] * eps(i, c.eq_b);
            if (c.eq_b == l) seed += 2.0 * penalty_ * cons_sum[ci] * eps(i, c.eq_a);
          } else if (c.kind == ConstraintKind::zero_latent_error_cov && c.eq_a == l) {
            seed += 2.0 * penalty_ * cons_sum[ci] * pu[layout_.latent_slot(i, c.latent)];
          }
        }
      }
      if (seed != 0.0)
        m.equations[l].residual.backprop(values, seed, {}, dlat, dpar);
    }
    if (grad != nullptr)
      for (std::size_t j = 0; j < layout_.n_free; ++j)
        (*grad)[j] += dpar[m.free_params[j]];
  }

  if (grad != nullptr) {
    for (std::size_t ci = 0; ci < m.constraints.size(); ++ci) {
      const ConstraintDecl& c = m.constraints[ci];
      if (c.mode == ConstraintMode::hard) continue;
      const double s = cons_sum[ci];
      switch (c.kind) {
        case ConstraintKind::center:
          for (std::size_t i = 0; i < n; ++i)
            (*grad)[layout_.latent_slot(i, c.latent)] += 2.0 * penalty_ * s;
          break;
        case ConstraintKind::normalize:
          for (std::size_t i = 0; i < n; ++i)
            (*grad)[layout_.latent_slot(i, c.latent)] +=
                4.0 * penalty_ * s * pu[layout_.latent_slot(i, c.latent)];
          break;
        case ConstraintKind::zero_latent_error_cov:
          for (std::size_t i = 0; i < n; ++i)
            (*grad)[layout_.latent_slot(i, c.latent)] += 2.0 * penalty_ * s * eps(i, c.eq_a);
          break;
        case ConstraintKind::zero_error_cov:
          break;  // fully handled through the residual seeds
      }
    }

    // Pull the gradient back through the hard-constraint projections,
    // innermost projection last.
    for (std::size_t si = stages.size(); si-- > 0;) {
      const Stage& st = stages[si];
      const ConstraintDecl& c = *st.c;
      if (c.kind == ConstraintKind::center) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += (*grad)[layout_.latent_slot(i, c.latent)];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) (*grad)[layout_.latent_slot(i, c.latent)] -= mean;
      } else if (c.kind == ConstraintKind::normalize && st.norm_sq > 0.0) {
        // w = sqrt(n) z / |z| ; J^T g = sqrt(n)/|z| (g - z (z.g)/|z|^2)
        const double norm = std::sqrt(st.norm_sq);
        const double scale = std::sqrt(static_cast<double>(n)) / norm;
        double zg = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          zg += st.pre_col[i] * (*grad)[layout_.latent_slot(i, c.latent)];
        for (std::size_t i = 0; i < n; ++i) {
          double& g = (*grad)[layout_.latent_slot(i, c.latent)];
          g = scale * (g - st.pre_col[i] * zg / st.norm_sq);
        }
      }
    }
  }

  return f;
}

}  // namespace clssem

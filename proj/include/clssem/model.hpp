#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clssem/expr.hpp"
#include "clssem/matrix.hpp"

namespace clssem {

enum class ConstraintKind : unsigned char {
  center,                 // sum_i Z_iq = 0
  normalize,              // sum_i Z_iq^2 = n  (unit variance reading of the constraint)
  zero_error_cov,         // sum_i eps_ik * eps_ik' = 0
  zero_latent_error_cov,  // sum_i Z_iq * eps_ik = 0
};

enum class ConstraintMode : unsigned char { soft, hard };

struct ConstraintDecl {
  ConstraintKind kind;
  ConstraintMode mode = ConstraintMode::soft;
  std::size_t latent = npos;  // center / normalize / zero_latent_error_cov
  std::size_t eq_a = npos;    // zero_error_cov / zero_latent_error_cov
  std::size_t eq_b = npos;    // zero_error_cov

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

struct Equation {
  std::string label;
  Expr lhs;
  Expr rhs;
  Expr residual;                      // lhs - rhs
  std::vector<std::size_t> latents;   // distinct latent indices, ascending
  std::size_t latent_count() const { return latents.size(); }  // L_l
};

struct ModelError : std::runtime_error {
  ModelError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  std::size_t line_number;
};

/// Immutable model specification: symbols, residual equations g_l = lhs - rhs,
/// fixed-parameter values and declared constraints.
struct Model {
  SymbolTable symbols;
  std::vector<Equation> equations;
  std::vector<ConstraintDecl> constraints;
  std::vector<std::optional<double>> param_fixed;  // size S_all, nullopt = free
  std::vector<std::size_t> free_params;            // param indices, declaration order
  std::vector<std::string> warnings;               // e.g. unanchored latent scale

  std::size_t n_manifest() const { return symbols.count(SymbolKind::manifest); }
  std::size_t n_latent() const { return symbols.count(SymbolKind::latent); }
  std::size_t n_param() const { return symbols.count(SymbolKind::param); }
  std::size_t n_free_params() const { return free_params.size(); }
  std::size_t n_equations() const { return equations.size(); }

  std::size_t equation_index(const std::string& label) const;  // throws ModelError

  /// Full parameter vector with fixed values filled in and free entries
  /// taken from `free_values` (length n_free_params()).
  std::vector<double> merge_params(std::span<const double> free_values) const;
};

/// Parses the line-oriented model format ('#' starts a comment):
///   latent: name, name, ...
///   manifest: name, name, ...
///   param: name [= value], ...
///   eq <label>: <expr> = <expr>
///   constraint [hard] center(<latent>) | normalize(<latent>) |
///              zerocov(<eq>,<eq>) | zerolatcov(<latent>,<eq>)
Model parse_model(const std::string& text);
Model parse_model_file(const std::string& path);

/// Canonical rendering; parse_model(print_model(m)) reproduces m.
std::string print_model(const Model& m);

/// Deterministic unknown-vector layout: free parameters first (declaration
/// order), then latent scores case-major. Total size S_free + n*Q.
struct UnknownLayout {
  std::size_t n_cases = 0;
  std::size_t n_free = 0;
  std::size_t n_latent = 0;

  std::size_t size() const { return n_free + n_cases * n_latent; }
  std::size_t param_slot(std::size_t free_ordinal) const { return free_ordinal; }
  std::size_t latent_slot(std::size_t case_i, std::size_t latent_q) const {
    return n_free + case_i * n_latent + latent_q;
  }
};

UnknownLayout free_unknowns(const Model& model, std::size_t n_cases);

/// Case data bound to manifest variables by column name.
struct Dataset {
  std::vector<std::string> columns;
  Matrix a;  // n x k

  std::size_t n_cases() const { return a.rows; }
  std::size_t n_columns() const { return a.cols; }
  std::size_t column_index(const std::string& name) const;  // throws ModelError

  static Dataset from_csv_string(const std::string& text, const std::string& origin = "<string>");
  static Dataset from_csv_file(const std::string& path);
  std::string to_csv_string() const;
  void to_csv_file(const std::string& path) const;
};

/// Maps model manifest index -> dataset column index; errors name the first
/// manifest missing from the dataset.
std::vector<std::size_t> manifest_column_map(const Model& model, const Dataset& data);

}  // namespace clssem

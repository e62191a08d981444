#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace clssem {

enum class SymbolKind : unsigned char { manifest, latent, param };

struct SymbolRef {
  SymbolKind kind;
  std::size_t index;
};

/// Declared names of a model, resolved once at build time. Expression nodes
/// store (kind, index) pairs, never raw strings.
class SymbolTable {
 public:
  std::size_t add(const std::string& name, SymbolKind kind);
  const SymbolRef* find(const std::string& name) const;
  const std::string& name_of(SymbolKind kind, std::size_t index) const;

  std::size_t count(SymbolKind kind) const;
  const std::vector<std::string>& names(SymbolKind kind) const;

 private:
  std::vector<std::string> manifests_, latents_, params_;
  std::unordered_map<std::string, SymbolRef> by_name_;

  std::vector<std::string>& bucket(SymbolKind kind);
  const std::vector<std::string>& bucket(SymbolKind kind) const;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg), position(pos) {}
  std::size_t position;  // 0-based offset into the parsed text
};

/// Values bound to one case: a data row, that case's latent scores, and the
/// full parameter vector (fixed parameters already merged in).
struct CaseBindings {
  std::span<const double> manifests;
  std::span<const double> latents;
  std::span<const double> params;
};

/// Immutable expression tree stored as a flat node pool in evaluation order
/// (children always precede parents), so evaluation is a single linear pass
/// and differentiation a single reverse pass.
class Expr {
 public:
  enum class Op : unsigned char {
    constant,
    manifest,
    latent,
    param,
    neg,
    abs,
    exp,
    theta,
    add,
    sub,
    mul,
    div,
    pow
  };

  struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int32_t sym = -1;
    std::int32_t exponent = 0;
    double value = 0.0;
  };

  Expr() = default;

  static Expr constant(double v);
  static Expr symbol(SymbolKind kind, std::size_t index);
  static Expr unary(Op op, Expr child);
  static Expr binary(Op op, Expr lhs, Expr rhs);
  static Expr pow(Expr base, int exponent);

  bool empty() const { return nodes_.empty(); }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::int32_t root() const { return root_; }

  /// Value at the bound point. `values` is caller scratch, resized to the
  /// node count and left holding all intermediate node values (reused by
  /// backprop). Division by zero yields IEEE inf/nan, flagged downstream.
  double eval(const CaseBindings& row, std::vector<double>& values) const;
  double eval(const CaseBindings& row) const;

  /// Reverse pass. Accumulates seed * d(expr)/d(symbol) into the output
  /// spans (+=); empty spans are skipped. `values` must come from eval at
  /// the same point. abs/theta use derivative 0 at the kink.
  void backprop(const std::vector<double>& values, double seed,
                std::span<double> d_manifest, std::span<double> d_latent,
                std::span<double> d_param) const;

  bool references(SymbolKind kind, std::size_t index) const;
  void collect_symbols(std::vector<SymbolRef>& out) const;

  bool equals(const Expr& other) const;

 private:
  std::int32_t append(const Expr& sub);  // returns new root index

  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

/// Parses the expression grammar:
///   expr   := term (('+'|'-') term)*
///   term   := factor (('*'|'/') factor)*
///   factor := atom ('^' integer)? | '-' factor
///   atom   := number | identifier | identifier '(' expr ')' | '(' expr ')'
/// with functions exp, abs, theta. Identifiers resolve against `symbols`.
Expr parse_expr(const std::string& text, const SymbolTable& symbols);

/// Precedence-aware rendering; parse(to_string(e)) reproduces e exactly.
std::string to_string(const Expr& e, const SymbolTable& symbols);

/// Partial derivatives of e at the bound point with respect to each
/// requested symbol, in order.
std::vector<double> grad(const Expr& e, std::span<const SymbolRef> wrt,
                         const CaseBindings& row);

}  // namespace clssem

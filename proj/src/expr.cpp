#include "clssem/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "clssem/format.hpp"

namespace clssem {

std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::from_chars(buf, buf + sizeof(buf), back);
    if (back == v) break;
  }
  return buf;
}

namespace {

double powi(double x, int k) {
  // k >= 0 enforced by the parser and builders
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// SymbolTable

std::vector<std::string>& SymbolTable::bucket(SymbolKind kind) {
  switch (kind) {
    case SymbolKind::manifest: return manifests_;
    case SymbolKind::latent: return latents_;
    default: return params_;
  }
}

const std::vector<std::string>& SymbolTable::bucket(SymbolKind kind) const {
  return const_cast<SymbolTable*>(this)->bucket(kind);
}

std::size_t SymbolTable::add(const std::string& name, SymbolKind kind) {
  if (by_name_.count(name) != 0)
    throw std::runtime_error("duplicate symbol '" + name + "'");
  auto& names = bucket(kind);
  names.push_back(name);
  const std::size_t idx = names.size() - 1;
  by_name_[name] = SymbolRef{kind, idx};
  return idx;
}

const SymbolRef* SymbolTable::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &it->second;
}

const std::string& SymbolTable::name_of(SymbolKind kind, std::size_t index) const {
  return bucket(kind).at(index);
}

std::size_t SymbolTable::count(SymbolKind kind) const { return bucket(kind).size(); }

const std::vector<std::string>& SymbolTable::names(SymbolKind kind) const {
  return bucket(kind);
}

// ---------------------------------------------------------------------------
// Expr builders

std::int32_t Expr::append(const Expr& sub) {
  const std::int32_t offset = static_cast<std::int32_t>(nodes_.size());
  for (Node n : sub.nodes_) {
    if (n.a >= 0) n.a += offset;
    if (n.b >= 0) n.b += offset;
    nodes_.push_back(n);
  }
  return sub.root_ + offset;
}

Expr Expr::constant(double v) {
  Expr e;
  e.nodes_.push_back(Node{Op::constant, -1, -1, -1, 0, v});
  e.root_ = 0;
  return e;
}

Expr Expr::symbol(SymbolKind kind, std::size_t index) {
  Op op = kind == SymbolKind::manifest  ? Op::manifest
          : kind == SymbolKind::latent ? Op::latent
                                       : Op::param;
  Expr e;
  e.nodes_.push_back(Node{op, -1, -1, static_cast<std::int32_t>(index), 0, 0.0});
  e.root_ = 0;
  return e;
}

Expr Expr::unary(Op op, Expr child) {
  Expr e = std::move(child);
  const std::int32_t a = e.root_;
  e.nodes_.push_back(Node{op, a, -1, -1, 0, 0.0});
  e.root_ = static_cast<std::int32_t>(e.nodes_.size()) - 1;
  return e;
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  Expr e = std::move(lhs);
  const std::int32_t a = e.root_;
  const std::int32_t b = e.append(rhs);
  e.nodes_.push_back(Node{op, a, b, -1, 0, 0.0});
  e.root_ = static_cast<std::int32_t>(e.nodes_.size()) - 1;
  return e;
}

Expr Expr::pow(Expr base, int exponent) {
  Expr e = std::move(base);
  const std::int32_t a = e.root_;
  e.nodes_.push_back(Node{Op::pow, a, -1, -1, exponent, 0.0});
  e.root_ = static_cast<std::int32_t>(e.nodes_.size()) - 1;
  return e;
}

// ---------------------------------------------------------------------------
// Evaluation and differentiation

double Expr::eval(const CaseBindings& row, std::vector<double>& values) const {
  values.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::constant: values[i] = n.value; break;
      case Op::manifest: values[i] = row.manifests[n.sym]; break;
      case Op::latent: values[i] = row.latents[n.sym]; break;
      case Op::param: values[i] = row.params[n.sym]; break;
      case Op::neg: values[i] = -values[n.a]; break;
      case Op::abs: values[i] = std::fabs(values[n.a]); break;
      case Op::exp: values[i] = std::exp(values[n.a]); break;
      case Op::theta: {
        const double x = values[n.a];
        values[i] = (x + std::fabs(x)) * 0.5;
        break;
      }
      case Op::add: values[i] = values[n.a] + values[n.b]; break;
      case Op::sub: values[i] = values[n.a] - values[n.b]; break;
      case Op::mul: values[i] = values[n.a] * values[n.b]; break;
      case Op::div: values[i] = values[n.a] / values[n.b]; break;
      case Op::pow: values[i] = powi(values[n.a], n.exponent); break;
    }
  }
  return values[root_];
}

double Expr::eval(const CaseBindings& row) const {
  std::vector<double> values;
  return eval(row, values);
}

void Expr::backprop(const std::vector<double>& values, double seed,
                    std::span<double> d_manifest, std::span<double> d_latent,
                    std::span<double> d_param) const {
  thread_local std::vector<double> adj;
  adj.assign(nodes_.size(), 0.0);
  adj[root_] = seed;
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    const double a = adj[k];
    if (a == 0.0) continue;
    const Node& n = nodes_[k];
    switch (n.op) {
      case Op::constant: break;
      case Op::manifest:
        if (!d_manifest.empty()) d_manifest[n.sym] += a;
        break;
      case Op::latent:
        if (!d_latent.empty()) d_latent[n.sym] += a;
        break;
      case Op::param:
        if (!d_param.empty()) d_param[n.sym] += a;
        break;
      case Op::neg: adj[n.a] -= a; break;
      case Op::abs: {
        const double x = values[n.a];
        adj[n.a] += a * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        break;
      }
      case Op::exp: adj[n.a] += a * values[k]; break;
      case Op::theta: {
        const double x = values[n.a];
        adj[n.a] += a * (x > 0.0 ? 1.0 : 0.0);
        break;
      }
      case Op::add:
        adj[n.a] += a;
        adj[n.b] += a;
        break;
      case Op::sub:
        adj[n.a] += a;
        adj[n.b] -= a;
        break;
      case Op::mul:
        adj[n.a] += a * values[n.b];
        adj[n.b] += a * values[n.a];
        break;
      case Op::div: {
        const double denom = values[n.b];
        adj[n.a] += a / denom;
        adj[n.b] -= a * values[n.a] / (denom * denom);
        break;
      }
      case Op::pow:
        if (n.exponent != 0)
          adj[n.a] += a * n.exponent * powi(values[n.a], n.exponent - 1);
        break;
    }
  }
}

bool Expr::references(SymbolKind kind, std::size_t index) const {
  Op want = kind == SymbolKind::manifest  ? Op::manifest
            : kind == SymbolKind::latent ? Op::latent
                                         : Op::param;
  for (const Node& n : nodes_)
    if (n.op == want && n.sym == static_cast<std::int32_t>(index)) return true;
  return false;
}

void Expr::collect_symbols(std::vector<SymbolRef>& out) const {
  for (const Node& n : nodes_) {
    SymbolKind kind;
    if (n.op == Op::manifest)
      kind = SymbolKind::manifest;
    else if (n.op == Op::latent)
      kind = SymbolKind::latent;
    else if (n.op == Op::param)
      kind = SymbolKind::param;
    else
      continue;
    bool seen = false;
    for (const SymbolRef& r : out)
      if (r.kind == kind && r.index == static_cast<std::size_t>(n.sym)) {
        seen = true;
        break;
      }
    if (!seen) out.push_back(SymbolRef{kind, static_cast<std::size_t>(n.sym)});
  }
}

namespace {

bool nodes_equal(const Expr& x, std::int32_t xi, const Expr& y, std::int32_t yi) {
  const Expr::Node& a = x.nodes()[xi];
  const Expr::Node& b = y.nodes()[yi];
  if (a.op != b.op || a.sym != b.sym || a.exponent != b.exponent) return false;
  if (a.op == Expr::Op::constant && a.value != b.value) return false;
  if ((a.a >= 0) != (b.a >= 0) || (a.b >= 0) != (b.b >= 0)) return false;
  if (a.a >= 0 && !nodes_equal(x, a.a, y, b.a)) return false;
  if (a.b >= 0 && !nodes_equal(x, a.b, y, b.b)) return false;
  return true;
}

}  // namespace

bool Expr::equals(const Expr& other) const {
  if (empty() || other.empty()) return empty() == other.empty();
  return nodes_equal(*this, root_, other, other.root_);
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class ExprParser {
 public:
  ExprParser(const std::string& text, const SymbolTable& symbols)
      : text_(text), symbols_(symbols) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size())
      throw ParseError("unexpected character '" + std::string(1, text_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Expr parse_sum() {
    Expr e = parse_term();
    for (;;) {
      if (consume('+'))
        e = Expr::binary(Expr::Op::add, std::move(e), parse_term());
      else if (consume('-'))
        e = Expr::binary(Expr::Op::sub, std::move(e), parse_term());
      else
        return e;
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      if (consume('*'))
        e = Expr::binary(Expr::Op::mul, std::move(e), parse_factor());
      else if (consume('/'))
        e = Expr::binary(Expr::Op::div, std::move(e), parse_factor());
      else
        return e;
    }
  }

  Expr parse_factor() {
    if (consume('-')) return Expr::unary(Expr::Op::neg, parse_factor());
    Expr e = parse_atom();
    if (consume('^')) {
      skip_ws();
      const std::size_t start = pos_;
      int exponent = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), exponent);
      if (ec != std::errc() || ptr == text_.data() + pos_)
        throw ParseError("expected integer exponent after '^'", start);
      if (exponent < 0) throw ParseError("negative exponents are not supported", start);
      pos_ = static_cast<std::size_t>(ptr - text_.data());
      e = Expr::pow(std::move(e), exponent);
    }
    return e;
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of expression", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!consume(')')) throw ParseError("expected ')'", pos_);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    throw ParseError("unexpected character '" + std::string(1, c) + "'", pos_);
  }

  Expr parse_number() {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc() || ptr == text_.data() + pos_)
      throw ParseError("malformed number", pos_);
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return Expr::constant(value);
  }

  Expr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name = text_.substr(start, pos_ - start);
    if (peek() == '(') {
      Expr::Op op;
      if (name == "exp")
        op = Expr::Op::exp;
      else if (name == "abs")
        op = Expr::Op::abs;
      else if (name == "theta")
        op = Expr::Op::theta;
      else
        throw ParseError("unknown function '" + name + "'", start);
      consume('(');
      Expr arg = parse_sum();
      if (!consume(')')) throw ParseError("expected ')'", pos_);
      return Expr::unary(op, std::move(arg));
    }
    const SymbolRef* ref = symbols_.find(name);
    if (ref == nullptr) throw ParseError("undeclared identifier '" + name + "'", start);
    return Expr::symbol(ref->kind, ref->index);
  }

  const std::string& text_;
  const SymbolTable& symbols_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(const std::string& text, const SymbolTable& symbols) {
  return ExprParser(text, symbols).parse();
}

// ---------------------------------------------------------------------------
// Printing

namespace {

// precedence levels: 0 sum, 1 term, 2 unary minus, 3 pow/atom
int precedence(Expr::Op op) {
  switch (op) {
    case Expr::Op::add:
    case Expr::Op::sub: return 0;
    case Expr::Op::mul:
    case Expr::Op::div: return 1;
    case Expr::Op::neg: return 2;
    default: return 3;
  }
}

bool atom_like(const Expr::Node& n) {
  switch (n.op) {
    case Expr::Op::manifest:
    case Expr::Op::latent:
    case Expr::Op::param:
    case Expr::Op::abs:
    case Expr::Op::exp:
    case Expr::Op::theta: return true;
    case Expr::Op::constant: return n.value >= 0.0;
    default: return false;
  }
}

void print_node(const Expr& e, std::int32_t idx, const SymbolTable& symbols,
                int parent_prec, bool rhs_of_noncommutative, std::string& out) {
  const Expr::Node& n = e.nodes()[idx];
  const int prec =
      (n.op == Expr::Op::constant && n.value < 0.0) ? 2 : precedence(n.op);
  const bool parens =
      prec < parent_prec || (prec == parent_prec && rhs_of_noncommutative && prec <= 1);
  if (parens) out += '(';
  switch (n.op) {
    case Expr::Op::constant: out += format_double(n.value); break;
    case Expr::Op::manifest: out += symbols.name_of(SymbolKind::manifest, n.sym); break;
    case Expr::Op::latent: out += symbols.name_of(SymbolKind::latent, n.sym); break;
    case Expr::Op::param: out += symbols.name_of(SymbolKind::param, n.sym); break;
    case Expr::Op::neg:
      out += '-';
      print_node(e, n.a, symbols, 2, false, out);
      break;
    case Expr::Op::abs:
    case Expr::Op::exp:
    case Expr::Op::theta:
      out += n.op == Expr::Op::abs ? "abs" : (n.op == Expr::Op::exp ? "exp" : "theta");
      out += '(';
      print_node(e, n.a, symbols, 0, false, out);
      out += ')';
      break;
    case Expr::Op::add:
      print_node(e, n.a, symbols, 0, false, out);
      out += " + ";
      print_node(e, n.b, symbols, 0, false, out);
      break;
    case Expr::Op::sub:
      print_node(e, n.a, symbols, 0, false, out);
      out += " - ";
      print_node(e, n.b, symbols, 0, true, out);
      break;
    case Expr::Op::mul:
      print_node(e, n.a, symbols, 1, false, out);
      out += "*";
      print_node(e, n.b, symbols, 1, false, out);
      break;
    case Expr::Op::div:
      print_node(e, n.a, symbols, 1, false, out);
      out += "/";
      print_node(e, n.b, symbols, 1, true, out);
      break;
    case Expr::Op::pow: {
      const bool wrap = !atom_like(e.nodes()[n.a]);
      if (wrap) out += '(';
      print_node(e, n.a, symbols, 0, false, out);
      if (wrap) out += ')';
      out += '^';
      out += std::to_string(n.exponent);
      break;
    }
  }
  if (parens) out += ')';
}

}  // namespace

std::string to_string(const Expr& e, const SymbolTable& symbols) {
  if (e.empty()) return "";
  std::string out;
  print_node(e, e.root(), symbols, 0, false, out);
  return out;
}

std::vector<double> grad(const Expr& e, std::span<const SymbolRef> wrt,
                         const CaseBindings& row) {
  std::vector<double> values;
  e.eval(row, values);
  std::vector<double> dman(row.manifests.size(), 0.0);
  std::vector<double> dlat(row.latents.size(), 0.0);
  std::vector<double> dpar(row.params.size(), 0.0);
  e.backprop(values, 1.0, dman, dlat, dpar);
  std::vector<double> out;
  out.reserve(wrt.size());
  for (const SymbolRef& r : wrt) {
    switch (r.kind) {
      case SymbolKind::manifest: out.push_back(dman[r.index]); break;
      case SymbolKind::latent: out.push_back(dlat[r.index]); break;
      case SymbolKind::param: out.push_back(dpar[r.index]); break;
    }
  }
  return out;
}

}  // namespace clssem

#include "clssem/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "clssem/format.hpp"

namespace clssem {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t p = s.find(sep, start);
    if (p == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

double parse_double_or_throw(const std::string& s, std::size_t line) {
  const std::string t = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ModelError("malformed number '" + t + "'", line);
  return v;
}

// True when the subtree is built only from constants and fixed parameters,
// i.e. it is a known scale factor at estimation time.
bool fixed_scale(const Model& m, const Expr& e, std::int32_t idx) {
  const Expr::Node& n = e.nodes()[idx];
  switch (n.op) {
    case Expr::Op::constant: return true;
    case Expr::Op::param: return m.param_fixed[n.sym].has_value();
    case Expr::Op::neg: return fixed_scale(m, e, n.a);
    case Expr::Op::mul:
    case Expr::Op::div: return fixed_scale(m, e, n.a) && fixed_scale(m, e, n.b);
    default: return false;
  }
}

// A latent's scale is anchored when it appears as an additive term either
// bare or multiplied only by fixed scale factors (a fixed loading).
bool anchors_latent(const Model& m, const Expr& e, std::int32_t idx, std::size_t q) {
  const Expr::Node& n = e.nodes()[idx];
  switch (n.op) {
    case Expr::Op::latent: return static_cast<std::size_t>(n.sym) == q;
    case Expr::Op::add:
    case Expr::Op::sub:
      return anchors_latent(m, e, n.a, q) || anchors_latent(m, e, n.b, q);
    case Expr::Op::neg: return anchors_latent(m, e, n.a, q);
    case Expr::Op::mul:
      return (fixed_scale(m, e, n.a) && anchors_latent(m, e, n.b, q)) ||
             (fixed_scale(m, e, n.b) && anchors_latent(m, e, n.a, q));
    default: return false;
  }
}

void finalize(Model& model) {
  for (std::size_t s = 0; s < model.n_param(); ++s)
    if (!model.param_fixed[s].has_value()) model.free_params.push_back(s);

  if (model.equations.empty()) throw ModelError("model has no equations");

  for (std::size_t q = 0; q < model.n_latent(); ++q) {
    bool used = false;
    for (const Equation& eq : model.equations)
      used = used || std::binary_search(eq.latents.begin(), eq.latents.end(), q);
    if (!used)
      throw ModelError("latent '" + model.symbols.name_of(SymbolKind::latent, q) +
                       "' appears in no equation");
  }

  // Scale identification: a fixed loading somewhere, or a normalize constraint.
  for (std::size_t q = 0; q < model.n_latent(); ++q) {
    bool anchored = false;
    for (const Equation& eq : model.equations)
      if (!eq.residual.empty() && anchors_latent(model, eq.residual, eq.residual.root(), q)) {
        anchored = true;
        break;
      }
    for (const ConstraintDecl& c : model.constraints)
      if (c.kind == ConstraintKind::normalize && c.latent == q) anchored = true;
    if (!anchored)
      model.warnings.push_back("latent '" + model.symbols.name_of(SymbolKind::latent, q) +
                               "' has no fixed loading and no normalize() constraint; its "
                               "scale is not identified");
  }
}

}  // namespace

std::size_t Model::equation_index(const std::string& label) const {
  for (std::size_t l = 0; l < equations.size(); ++l)
    if (equations[l].label == label) return l;
  throw ModelError("unknown equation label '" + label + "'");
}

std::vector<double> Model::merge_params(std::span<const double> free_values) const {
  std::vector<double> full(n_param(), 0.0);
  for (std::size_t s = 0; s < n_param(); ++s)
    if (param_fixed[s].has_value()) full[s] = *param_fixed[s];
  for (std::size_t j = 0; j < free_params.size(); ++j) full[free_params[j]] = free_values[j];
  return full;
}

Model parse_model(const std::string& text) {
  Model model;
  std::set<std::string> labels;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (std::size_t h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;

    if (line.rfind("latent:", 0) == 0 || line.rfind("manifest:", 0) == 0) {
      const bool is_latent = line[0] == 'l';
      for (const std::string& piece : split(line.substr(line.find(':') + 1), ',')) {
        const std::string name = trim(piece);
        if (!valid_identifier(name)) throw ModelError("invalid name '" + name + "'", line_no);
        try {
          model.symbols.add(name, is_latent ? SymbolKind::latent : SymbolKind::manifest);
        } catch (const std::runtime_error& e) {
          throw ModelError(e.what(), line_no);
        }
      }
    } else if (line.rfind("param:", 0) == 0) {
      for (const std::string& piece : split(line.substr(line.find(':') + 1), ',')) {
        const std::string entry = trim(piece);
        std::string name = entry;
        std::optional<double> fixed;
        if (std::size_t eq = entry.find('='); eq != std::string::npos) {
          name = trim(entry.substr(0, eq));
          fixed = parse_double_or_throw(entry.substr(eq + 1), line_no);
        }
        if (!valid_identifier(name)) throw ModelError("invalid name '" + name + "'", line_no);
        try {
          model.symbols.add(name, SymbolKind::param);
        } catch (const std::runtime_error& e) {
          throw ModelError(e.what(), line_no);
        }
        model.param_fixed.push_back(fixed);
      }
    } else if (line.rfind("eq", 0) == 0 &&
               (line.size() > 2 && (line[2] == ' ' || line[2] == '\t'))) {
      const std::size_t colon = line.find(':');
      if (colon == std::string::npos) throw ModelError("expected ':' after equation label", line_no);
      const std::string label = trim(line.substr(2, colon - 2));
      if (!valid_identifier(label)) throw ModelError("invalid equation label '" + label + "'", line_no);
      if (!labels.insert(label).second)
        throw ModelError("duplicate equation label '" + label + "'", line_no);
      const std::string body = line.substr(colon + 1);
      const std::size_t eq_pos = body.find('=');
      if (eq_pos == std::string::npos)
        throw ModelError("equation must contain '='", line_no);
      Equation eq;
      eq.label = label;
      try {
        eq.lhs = parse_expr(body.substr(0, eq_pos), model.symbols);
        eq.rhs = parse_expr(body.substr(eq_pos + 1), model.symbols);
      } catch (const ParseError& e) {
        throw ModelError(std::string(e.what()), line_no);
      }
      eq.residual = Expr::binary(Expr::Op::sub, eq.lhs, eq.rhs);
      std::vector<SymbolRef> refs;
      eq.residual.collect_symbols(refs);
      for (const SymbolRef& r : refs)
        if (r.kind == SymbolKind::latent) eq.latents.push_back(r.index);
      std::sort(eq.latents.begin(), eq.latents.end());
      model.equations.push_back(std::move(eq));
    } else if (line.rfind("constraint", 0) == 0) {
      std::string body = trim(line.substr(10));
      ConstraintDecl decl;
      if (body.rfind("hard ", 0) == 0) {
        decl.mode = ConstraintMode::hard;
        body = trim(body.substr(5));
      }
      const std::size_t open = body.find('(');
      const std::size_t close = body.rfind(')');
      if (open == std::string::npos || close == std::string::npos || close < open)
        throw ModelError("malformed constraint '" + body + "'", line_no);
      const std::string kind = trim(body.substr(0, open));
      const std::vector<std::string> args = split(body.substr(open + 1, close - open - 1), ',');
      auto latent_arg = [&](const std::string& arg) {
        const SymbolRef* ref = model.symbols.find(trim(arg));
        if (ref == nullptr || ref->kind != SymbolKind::latent)
          throw ModelError("constraint references unknown latent '" + trim(arg) + "'", line_no);
        return ref->index;
      };
      auto eq_arg = [&](const std::string& arg) {
        try {
          return model.equation_index(trim(arg));
        } catch (const ModelError&) {
          throw ModelError("constraint references unknown equation '" + trim(arg) + "'", line_no);
        }
      };
      if (kind == "center" && args.size() == 1) {
        decl.kind = ConstraintKind::center;
        decl.latent = latent_arg(args[0]);
      } else if (kind == "normalize" && args.size() == 1) {
        decl.kind = ConstraintKind::normalize;
        decl.latent = latent_arg(args[0]);
      } else if (kind == "zerocov" && args.size() == 2) {
        decl.kind = ConstraintKind::zero_error_cov;
        decl.eq_a = eq_arg(args[0]);
        decl.eq_b = eq_arg(args[1]);
      } else if (kind == "zerolatcov" && args.size() == 2) {
        decl.kind = ConstraintKind::zero_latent_error_cov;
        decl.latent = latent_arg(args[0]);
        decl.eq_a = eq_arg(args[1]);
      } else {
        throw ModelError("malformed constraint '" + body + "'", line_no);
      }
      if (decl.mode == ConstraintMode::hard && decl.kind != ConstraintKind::center &&
          decl.kind != ConstraintKind::normalize)
        throw ModelError("hard mode is only supported for center/normalize", line_no);
      model.constraints.push_back(decl);
    } else {
      throw ModelError("unrecognized directive '" + line + "'", line_no);
    }
  }

  finalize(model);
  return model;
}

Model parse_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_model(buf.str());
  } catch (const ModelError& e) {
    throw ModelError(path + ": " + e.what());
  }
}

std::string print_model(const Model& m) {
  std::ostringstream out;
  auto join = [](const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) s += ", ";
      s += names[i];
    }
    return s;
  };
  if (m.n_latent() > 0) out << "latent: " << join(m.symbols.names(SymbolKind::latent)) << "\n";
  if (m.n_manifest() > 0)
    out << "manifest: " << join(m.symbols.names(SymbolKind::manifest)) << "\n";
  if (m.n_param() > 0) {
    out << "param: ";
    for (std::size_t s = 0; s < m.n_param(); ++s) {
      if (s) out << ", ";
      out << m.symbols.name_of(SymbolKind::param, s);
      if (m.param_fixed[s].has_value()) out << " = " << format_double(*m.param_fixed[s]);
    }
    out << "\n";
  }
  for (const Equation& eq : m.equations)
    out << "eq " << eq.label << ": " << to_string(eq.lhs, m.symbols) << " = "
        << to_string(eq.rhs, m.symbols) << "\n";
  for (const ConstraintDecl& c : m.constraints) {
    out << "constraint ";
    if (c.mode == ConstraintMode::hard) out << "hard ";
    switch (c.kind) {
      case ConstraintKind::center:
        out << "center(" << m.symbols.name_of(SymbolKind::latent, c.latent) << ")";
        break;
      case ConstraintKind::normalize:
        out << "normalize(" << m.symbols.name_of(SymbolKind::latent, c.latent) << ")";
        break;
      case ConstraintKind::zero_error_cov:
        out << "zerocov(" << m.equations[c.eq_a].label << ", " << m.equations[c.eq_b].label << ")";
        break;
      case ConstraintKind::zero_latent_error_cov:
        out << "zerolatcov(" << m.symbols.name_of(SymbolKind::latent, c.latent) << ", "
            << m.equations[c.eq_a].label << ")";
        break;
    }
    out << "\n";
  }
  return out.str();
}

UnknownLayout free_unknowns(const Model& model, std::size_t n_cases) {
  UnknownLayout layout;
  layout.n_cases = n_cases;
  layout.n_free = model.n_free_params();
  layout.n_latent = model.n_latent();
  return layout;
}

// ---------------------------------------------------------------------------
// Dataset

std::size_t Dataset::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return j;
  throw ModelError("dataset has no column '" + name + "'");
}

Dataset Dataset::from_csv_string(const std::string& text, const std::string& origin) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ModelError(origin + ": empty CSV");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (const std::string& name : split(line, ',')) {
    const std::string t = trim(name);
    if (t.empty()) throw ModelError(origin + ": line 1: empty column name");
    d.columns.push_back(t);
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != d.columns.size())
      throw ModelError(origin + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(d.columns.size()) + " fields, got " +
                       std::to_string(cells.size()));
    for (const std::string& cell : cells) {
      const std::string t = trim(cell);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || ptr != t.data() + t.size())
        throw ModelError(origin + ": line " + std::to_string(line_no) + ": malformed number '" +
                         t + "'");
      if (!std::isfinite(v))
        throw ModelError(origin + ": line " + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ModelError(origin + ": CSV has no data rows");
  d.a = Matrix(rows, d.columns.size());
  d.a.v = std::move(values);
  return d;
}

Dataset Dataset::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open data file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv_string(buf.str(), path);
}

std::string Dataset::to_csv_string() const {
  std::ostringstream out;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) out << ',';
    out << columns[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) {
      if (j) out << ',';
      out << format_double(a(i, j));
    }
    out << '\n';
  }
  return out.str();
}

void Dataset::to_csv_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write data file '" + path + "'");
  out << to_csv_string();
}

std::vector<std::size_t> manifest_column_map(const Model& model, const Dataset& data) {
  std::vector<std::size_t> map;
  map.reserve(model.n_manifest());
  for (const std::string& name : model.symbols.names(SymbolKind::manifest))
    map.push_back(data.column_index(name));
  return map;
}

}  // namespace clssem

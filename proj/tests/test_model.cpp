#include <doctest.h>

#include "clssem/model.hpp"
#include "clssem/simgen.hpp"

using namespace clssem;

TEST_SUITE_BEGIN("model");

TEST_CASE("minimal single-equation model") {
  const Model m = parse_model(
      "latent: Z\n"
      "manifest: x1\n"
      "eq e1: x1 = Z\n");
  CHECK(m.n_equations() == 1);
  CHECK(m.equations[0].latent_count() == 1);
  CHECK(m.n_manifest() == 1);
  CHECK(m.n_free_params() == 0);
}

TEST_CASE("ganzach study model has the documented shape") {
  const Model m = study_model(Study::ganzach);
  CHECK(m.n_equations() == 10);  // 9 measurement + 1 structural
  CHECK(m.n_latent() == 3);
  CHECK(m.n_manifest() == 9);
  CHECK(m.warnings.empty());
}

TEST_CASE("democracy study model has the documented shape") {
  const Model m = study_model(Study::democracy);
  CHECK(m.n_equations() == 13);
  CHECK(m.n_latent() == 3);
  CHECK(m.n_manifest() == 11);
  CHECK(m.equations[m.equation_index("st1")].latent_count() == 2);
  CHECK(m.equations[m.equation_index("st2")].latent_count() == 3);
  CHECK(m.warnings.empty());
}

TEST_CASE("free_unknowns layout: parameters first, then case-major scores") {
  const Model m = parse_model(
      "latent: Z1, Z2, Z3\n"
      "manifest: x1, x2, x3\n"
      "param: p1, p2, p3, p4, p5, p6, p7, p8\n"
      "eq e1: x1 = p1*Z1\n"
      "eq e2: x2 = p2*Z2\n"
      "eq e3: x3 = p3*Z3\n");
  const UnknownLayout layout = free_unknowns(m, 100);
  CHECK(layout.size() == 308);  // S + n Q = 8 + 300
  CHECK(layout.param_slot(0) == 0);
  CHECK(layout.latent_slot(0, 0) == 8);
  CHECK(layout.latent_slot(0, 2) == 10);
  CHECK(layout.latent_slot(1, 0) == 11);

  const Model reg = study_model(Study::regression);
  CHECK(free_unknowns(reg, 100).size() == 101);  // a free, one latent

  const Model gz = study_model(Study::ganzach);
  CHECK(gz.n_free_params() == 21);
  CHECK(free_unknowns(gz, 100).size() == 21 + 3 * 100);
}

TEST_CASE("fixed parameters leave the free vector") {
  const Model m = parse_model(
      "latent: Z\n"
      "manifest: x1, x2\n"
      "param: lam = 1, b\n"
      "eq e1: x1 = lam*Z\n"
      "eq e2: x2 = b*Z\n");
  CHECK(m.n_param() == 2);
  CHECK(m.n_free_params() == 1);
  CHECK(m.symbols.name_of(SymbolKind::param, m.free_params[0]) == "b");
  const std::vector<double> full = m.merge_params(std::vector<double>{7.0});
  CHECK(full[0] == 1.0);
  CHECK(full[1] == 7.0);
}

TEST_CASE("round trip through print_model") {
  const char* text =
      "latent: Z, W\n"
      "manifest: x1, x2, y\n"
      "param: lam = 1, b, off\n"
      "eq e1: x1 = lam*Z + off\n"
      "eq e2: x2 = b*W\n"
      "eq e3: y = b*Z*W + theta(Z)\n"
      "constraint center(Z)\n"
      "constraint hard center(W)\n"
      "constraint normalize(W)\n"
      "constraint zerocov(e1, e2)\n"
      "constraint zerolatcov(Z, e3)\n";
  const Model a = parse_model(text);
  const Model b = parse_model(print_model(a));
  CHECK(print_model(a) == print_model(b));
  REQUIRE(a.equations.size() == b.equations.size());
  for (std::size_t l = 0; l < a.equations.size(); ++l) {
    CHECK(a.equations[l].label == b.equations[l].label);
    CHECK(a.equations[l].lhs.equals(b.equations[l].lhs));
    CHECK(a.equations[l].rhs.equals(b.equations[l].rhs));
    CHECK(a.equations[l].latents == b.equations[l].latents);
  }
  REQUIRE(a.constraints.size() == b.constraints.size());
  for (std::size_t c = 0; c < a.constraints.size(); ++c) {
    CHECK(a.constraints[c].kind == b.constraints[c].kind);
    CHECK(a.constraints[c].mode == b.constraints[c].mode);
    CHECK(a.constraints[c].latent == b.constraints[c].latent);
    CHECK(a.constraints[c].eq_a == b.constraints[c].eq_a);
    CHECK(a.constraints[c].eq_b == b.constraints[c].eq_b);
  }
  CHECK(a.param_fixed == b.param_fixed);
}

TEST_CASE("validation errors") {
  // undeclared symbol, with the line number in the message
  CHECK_THROWS_WITH_AS(parse_model("latent: Z\nmanifest: x\neq e1: x = Q\n"),
                       doctest::Contains("Q"), ModelError);
  // duplicate labels
  CHECK_THROWS_WITH_AS(
      parse_model("latent: Z\nmanifest: x\neq e1: x = Z\neq e1: x = Z\n"),
      doctest::Contains("duplicate equation label"), ModelError);
  // latent never used
  CHECK_THROWS_WITH_AS(parse_model("latent: Z, W\nmanifest: x\neq e1: x = Z\n"),
                       doctest::Contains("W"), ModelError);
  // malformed constraint
  CHECK_THROWS_AS(parse_model("latent: Z\nmanifest: x\neq e1: x = Z\nconstraint center(x)\n"),
                  ModelError);
  CHECK_THROWS_AS(
      parse_model("latent: Z\nmanifest: x\neq e1: x = Z\nconstraint hard zerocov(e1, e1)\n"),
      ModelError);
  // duplicate names across kinds
  CHECK_THROWS_AS(parse_model("latent: Z\nmanifest: Z\neq e1: Z = Z\n"), ModelError);
  // no equations
  CHECK_THROWS_AS(parse_model("manifest: x\n"), ModelError);
}

TEST_CASE("scale-anchor warning") {
  const Model free_loading = parse_model(
      "latent: Z\nmanifest: x\nparam: lam\neq e1: x = lam*Z\n");
  REQUIRE(free_loading.warnings.size() == 1);
  CHECK(free_loading.warnings[0].find("Z") != std::string::npos);

  const Model normalized = parse_model(
      "latent: Z\nmanifest: x\nparam: lam\neq e1: x = lam*Z\nconstraint normalize(Z)\n");
  CHECK(normalized.warnings.empty());

  const Model anchored = parse_model(
      "latent: Z\nmanifest: x, y\nparam: lam\neq e1: x = Z\neq e2: y = lam*Z\n");
  CHECK(anchored.warnings.empty());
}

TEST_CASE("CSV datasets") {
  const Dataset d = Dataset::from_csv_string("x1, x2\n1.5,2\n-0.25,3e-1\n");
  CHECK(d.n_cases() == 2);
  CHECK(d.n_columns() == 2);
  CHECK(d.a(1, 1) == doctest::Approx(0.3));
  CHECK(d.column_index("x2") == 1);
  CHECK_THROWS_AS(d.column_index("nope"), ModelError);

  const Dataset back = Dataset::from_csv_string(d.to_csv_string());
  CHECK(back.a.v == d.a.v);
  CHECK(back.columns == d.columns);

  CHECK_THROWS_WITH_AS(Dataset::from_csv_string("x\n1\nnan\n", "f.csv"),
                       doctest::Contains("line 3"), ModelError);
  CHECK_THROWS_WITH_AS(Dataset::from_csv_string("x,y\n1\n", "f.csv"),
                       doctest::Contains("expected 2 fields"), ModelError);
  CHECK_THROWS_AS(Dataset::from_csv_string("x\n"), ModelError);
}

TEST_CASE("manifest binding names the missing column") {
  const Model m = parse_model("latent: Z\nmanifest: x1, x9\neq e1: x1 = Z\neq e2: x9 = Z\n");
  const Dataset d = Dataset::from_csv_string("x1\n1\n");
  CHECK_THROWS_WITH_AS(manifest_column_map(m, d), doctest::Contains("x9"), ModelError);
}

TEST_SUITE_END();

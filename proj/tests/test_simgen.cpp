#include <doctest.h>

#include <cmath>

#include "clssem/simgen.hpp"

using namespace clssem;

namespace {

double column_mean(const Matrix& a, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) s += a(i, j);
  return s / static_cast<double>(a.rows);
}

double column_cov(const Matrix& a, std::size_t x, std::size_t y) {
  const double mx = column_mean(a, x), my = column_mean(a, y);
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) s += (a(i, x) - mx) * (a(i, y) - my);
  return s / static_cast<double>(a.rows);
}

}  // namespace

TEST_SUITE_BEGIN("simgen");

TEST_CASE("same seed gives bit-identical data, different seed differs") {
  for (Study s : {Study::regression, Study::democracy, Study::ganzach, Study::muthen,
                  Study::exponential, Study::implicative}) {
    CAPTURE(to_string(s));
    const SimData a = generate(SimSpec{s, 50, 42, {}});
    const SimData b = generate(SimSpec{s, 50, 42, {}});
    CHECK(a.data.a.v == b.data.a.v);
    CHECK(a.true_latents.v == b.true_latents.v);
    const SimData c = generate(SimSpec{s, 50, 43, {}});
    CHECK(a.data.a.v != c.data.a.v);
  }
}

TEST_CASE("column counts and names match the companion models") {
  CHECK(generate(SimSpec{Study::regression, 5, 1, {}}).data.n_columns() == 4);
  CHECK(generate(SimSpec{Study::democracy, 5, 1, {}}).data.n_columns() == 11);
  CHECK(generate(SimSpec{Study::ganzach, 5, 1, {}}).data.n_columns() == 9);
  CHECK(generate(SimSpec{Study::muthen, 5, 1, {}}).data.n_columns() == 12);
  CHECK(generate(SimSpec{Study::exponential, 5, 1, {}}).data.n_columns() == 4);
  CHECK(generate(SimSpec{Study::implicative, 5, 1, {}}).data.n_columns() == 3);

  for (Study s : {Study::regression, Study::democracy, Study::ganzach, Study::muthen,
                  Study::exponential, Study::implicative}) {
    const Model m = study_model(s);
    const SimData sim = generate(SimSpec{s, 5, 1, {}});
    CHECK(manifest_column_map(m, sim.data).size() == m.n_manifest());  // throws if missing
    CHECK(sim.latent_names == m.symbols.names(SymbolKind::latent));
    for (std::size_t j = 0; j < m.n_free_params(); ++j)
      CHECK(sim.true_params.count(
                m.symbols.name_of(SymbolKind::param, m.free_params[j])) == 1);
  }
}

TEST_CASE("zero-noise algebra") {
  std::map<std::string, double> zero = {
      {"sigma_x1", 0.0}, {"sigma_x2", 0.0}, {"sigma_y1", 0.0}, {"sigma_y2", 0.0}};
  const SimData reg = gen_regression(20, 3, zero);
  for (std::size_t i = 0; i < 20; ++i) {
    const double x = reg.true_latents(i, 0);
    CHECK(reg.data.a(i, 0) == doctest::Approx(x));            // x1 = X
    CHECK(reg.data.a(i, 1) == doctest::Approx(x));            // x2 = X
    CHECK(reg.data.a(i, 2) == doctest::Approx(0.5 * x));      // y1 = 0.5 X
    CHECK(reg.data.a(i, 3) == doctest::Approx(0.5 * x));
  }

  const SimData dem = gen_democracy(20, 5, {{"sigma_y1", 0.0}, {"sigma_1", 0.0}});
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(dem.data.a(i, 3) == doctest::Approx(dem.true_latents(i, 1)));  // y1 = dem60
    CHECK(dem.true_latents(i, 1) ==
          doctest::Approx(1.2 * dem.true_latents(i, 0)));  // dem60 = b1 ind60
  }

  const SimData mut =
      gen_muthen(20, 7, {{"sigma_eta3", 0.0}, {"sigma_eta4", 0.0}, {"sigma_scale", 0.0}});
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(mut.true_latents(i, 3) == doctest::Approx(0.7 * mut.true_latents(i, 2)));
    CHECK(mut.data.a(i, 3) == doctest::Approx(mut.true_latents(i, 1)));  // y4 = eta2
  }

  const SimData gz = gen_ganzach(20, 9,
                                 {{"sigma_eta", 0.0}});
  for (std::size_t i = 0; i < 20; ++i) {
    const double x1 = gz.true_latents(i, 1), x2 = gz.true_latents(i, 2);
    CHECK(gz.true_latents(i, 0) ==
          doctest::Approx(0.3 * x1 + 0.2 * x2 + 0.5 * x1 * x1 + 0.3 * x1 * x2 +
                          0.2 * x2 * x2));
  }

  const SimData ex = gen_exponential(20, 11, {{"sigma_y1", 0.0}, {"sigma_x1", 0.0}});
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(ex.data.a(i, 0) == doctest::Approx(ex.true_latents(i, 0)));
    CHECK(ex.data.a(i, 2) == doctest::Approx(3.0 * std::exp(ex.true_latents(i, 0) / 2.0)));
  }

  const SimData im = gen_implicative(20, 13, {{"sigma_y", 0.0}});
  for (std::size_t i = 0; i < 20; ++i) {
    const double x0 = im.true_latents(i, 0);
    CHECK(im.data.a(i, 2) ==
          doctest::Approx(0.4 * x0 + 0.8 * std::max(x0, 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("sample moments converge to the specified ones") {
  const std::size_t n = 10000;

  // cov(x2, y2) = a var(X) = 0.5; SE of the sample covariance ~ 0.0072
  const SimData reg = gen_regression(n, 1);
  CHECK(std::abs(column_cov(reg.data.a, 1, 3) - 0.5) < 3.0 * 0.0072);

  // var(dem60) = b1^2 + sigma_1^2 = 1.69; SE ~ 1.69 sqrt(2/n)
  const SimData dem = gen_democracy(n, 2);
  double acc = 0.0;
  const double mean = column_mean(dem.true_latents, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = dem.true_latents(i, 1) - mean;
    acc += c * c;
  }
  CHECK(std::abs(acc / n - 1.69) < 3.0 * 1.69 * std::sqrt(2.0 / n));

  // corr(xi1, xi2) = 0.3; SE ~ (1 - rho^2)/sqrt(n)
  const SimData gz = gen_ganzach(n, 3);
  double c11 = 0.0, c22 = 0.0, c12 = 0.0;
  const double m1 = column_mean(gz.true_latents, 1), m2 = column_mean(gz.true_latents, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = gz.true_latents(i, 1) - m1, b = gz.true_latents(i, 2) - m2;
    c11 += a * a;
    c22 += b * b;
    c12 += a * b;
  }
  CHECK(std::abs(c12 / std::sqrt(c11 * c22) - 0.3) < 3.0 * (1.0 - 0.09) / std::sqrt(n));

  // muthen indicator noise: sd(y1 - eta1) = 0.1 (1 + 1 mod 3) = 0.2
  const SimData mut = gen_muthen(n, 4);
  double nacc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = mut.data.a(i, 0) - mut.true_latents(i, 0);
    nacc += e * e;
  }
  CHECK(std::sqrt(nacc / n) == doctest::Approx(0.2).epsilon(0.05));

  // exponential latent scale: unit by default, 0.1 via override
  auto latent_sd = [&](const SimData& sim) {
    double acc = 0.0;
    const double mean = column_mean(sim.true_latents, 0);
    for (std::size_t i = 0; i < sim.true_latents.rows; ++i) {
      const double c = sim.true_latents(i, 0) - mean;
      acc += c * c;
    }
    return std::sqrt(acc / static_cast<double>(sim.true_latents.rows));
  };
  CHECK(latent_sd(gen_exponential(n, 5)) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(latent_sd(gen_exponential(n, 5, {{"sigma_x0", 0.1}})) ==
        doctest::Approx(0.1).epsilon(0.05));

  // theta never negative: cov(x1, y) > 0
  const SimData im = gen_implicative(n, 6);
  CHECK(column_cov(im.data.a, 0, 2) > 0.0);
}

TEST_CASE("study parsing") {
  CHECK(parse_study("muthen") == Study::muthen);
  CHECK(std::string(to_string(Study::implicative)) == "implicative");
  CHECK_THROWS_AS(parse_study("unknown"), std::invalid_argument);
}

TEST_SUITE_END();

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "clssem/model.hpp"

namespace clssem {

enum class Study : unsigned char {
  regression,
  democracy,
  ganzach,
  muthen,
  exponential,
  implicative
};

Study parse_study(const std::string& name);
const char* to_string(Study s);

/// Seeded generator configuration. `params` overrides generator parameters
/// by name (coefficients and noise SDs; see the README for the name list);
/// everything else keeps the study defaults.
struct SimSpec {
  Study study = Study::regression;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::map<std::string, double> params;
};

/// Generated data plus the ground truth for scoring: true latent scores
/// (columns in the companion model's latent order) and true parameter values
/// (keyed by the companion model's parameter names).
struct SimData {
  Dataset data;
  Matrix true_latents;
  std::vector<std::string> latent_names;
  std::map<std::string, double> true_params;
};

SimData generate(const SimSpec& spec);

SimData gen_regression(std::size_t n, std::uint64_t seed,
                       const std::map<std::string, double>& params = {});
SimData gen_democracy(std::size_t n, std::uint64_t seed,
                      const std::map<std::string, double>& params = {});
SimData gen_ganzach(std::size_t n, std::uint64_t seed,
                    const std::map<std::string, double>& params = {});
SimData gen_muthen(std::size_t n, std::uint64_t seed,
                   const std::map<std::string, double>& params = {});
SimData gen_exponential(std::size_t n, std::uint64_t seed,
                        const std::map<std::string, double>& params = {});
SimData gen_implicative(std::size_t n, std::uint64_t seed,
                        const std::map<std::string, double>& params = {});

/// The estimation model that matches each generator.
const char* study_model_text(Study s);
Model study_model(Study s);

}  // namespace clssem

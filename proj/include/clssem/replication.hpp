#pragma once

#include "clssem/estimator.hpp"
#include "clssem/simgen.hpp"

namespace clssem {

/// One Monte-Carlo replication sweep: generate `reps` datasets from a study,
/// estimate each with every requested strategy, and tabulate estimation
/// errors (estimate minus truth) per free parameter.
struct ReplicationRequest {
  Study study = Study::regression;
  std::size_t n = 100;
  std::size_t reps = 25;
  std::vector<WeightStrategy> strategies;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  EstimationConfig cfg;
};

struct ReplicationTable {
  Study study;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::vector<WeightStrategy> strategies;
  std::vector<std::string> params;   // free parameters of the study model
  std::vector<double> true_values;   // aligned with params
  // errors[strategy][param] = error per successful replicate
  std::vector<std::vector<std::vector<double>>> errors;
  std::vector<std::size_t> failures;  // per strategy

  double mean_error(std::size_t strategy, std::size_t param) const;
  double sd_error(std::size_t strategy, std::size_t param) const;  // sample SD
  std::size_t param_index(const std::string& name) const;
  std::size_t strategy_index(WeightStrategy s) const;
};

ReplicationTable replicate_study(const ReplicationRequest& request);

/// Paper-style table: one row per parameter, one "mean(sd)" cell per
/// strategy, three decimals.
std::string format_table(const ReplicationTable& table);

/// Machine-readable long form: study,n,reps,strategy,param,true,mean,sd,failures.
std::string table_to_csv(const ReplicationTable& table);

}  // namespace clssem

#include "clssem/replication.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "clssem/parallel.hpp"
#include "clssem/rng.hpp"

namespace clssem {

double ReplicationTable::mean_error(std::size_t strategy, std::size_t param) const {
  const std::vector<double>& e = errors[strategy][param];
  if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double v : e) acc += v;
  return acc / static_cast<double>(e.size());
}

double ReplicationTable::sd_error(std::size_t strategy, std::size_t param) const {
  const std::vector<double>& e = errors[strategy][param];
  if (e.size() < 2) return 0.0;
  const double mean = mean_error(strategy, param);
  double acc = 0.0;
  for (double v : e) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(e.size() - 1));
}

std::size_t ReplicationTable::param_index(const std::string& name) const {
  for (std::size_t p = 0; p < params.size(); ++p)
    if (params[p] == name) return p;
  throw std::invalid_argument("no parameter '" + name + "' in replication table");
}

std::size_t ReplicationTable::strategy_index(WeightStrategy s) const {
  for (std::size_t i = 0; i < strategies.size(); ++i)
    if (strategies[i] == s) return i;
  throw std::invalid_argument("strategy not present in replication table");
}

ReplicationTable replicate_study(const ReplicationRequest& request) {
  const Model model = study_model(request.study);
  ReplicationTable table;
  table.study = request.study;
  table.n = request.n;
  table.reps = request.reps;
  table.strategies = request.strategies;
  for (std::size_t j = 0; j < model.n_free_params(); ++j)
    table.params.push_back(model.symbols.name_of(SymbolKind::param, model.free_params[j]));

  {
    const SimData probe = generate(SimSpec{request.study, 1, request.seed, {}});
    for (const std::string& p : table.params) table.true_values.push_back(probe.true_params.at(p));
  }

  const std::size_t n_s = request.strategies.size();
  const std::size_t n_p = table.params.size();
  constexpr double kFail = std::numeric_limits<double>::quiet_NaN();

  // per-rep error slabs, merged deterministically by rep index afterwards
  std::vector<std::vector<double>> rep_errors(request.reps,
                                              std::vector<double>(n_s * n_p, kFail));
  parallel_for(request.jobs, request.reps, [&](std::size_t rep) {
    const SimData sim =
        generate(SimSpec{request.study, request.n, Rng::mix(request.seed, rep), {}});
    for (std::size_t s = 0; s < n_s; ++s) {
      try {
        const EstimationResult res =
            estimate(model, sim.data, request.strategies[s], request.cfg);
        for (std::size_t p = 0; p < n_p; ++p)
          rep_errors[rep][s * n_p + p] =
              res.param_values[p] - sim.true_params.at(table.params[p]);
      } catch (const std::exception&) {
        // slab stays NaN; counted as failure below
      }
    }
  });

  table.errors.assign(n_s, std::vector<std::vector<double>>(n_p));
  table.failures.assign(n_s, 0);
  for (std::size_t rep = 0; rep < request.reps; ++rep)
    for (std::size_t s = 0; s < n_s; ++s) {
      if (std::isnan(rep_errors[rep][s * n_p])) {
        ++table.failures[s];
        continue;
      }
      for (std::size_t p = 0; p < n_p; ++p)
        table.errors[s][p].push_back(rep_errors[rep][s * n_p + p]);
    }
  return table;
}

std::string format_table(const ReplicationTable& table) {
  std::ostringstream out;
  out << "study " << to_string(table.study) << ", n=" << table.n << ", reps=" << table.reps
      << "\n";
  out << "param      true    ";
  for (WeightStrategy s : table.strategies) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%-16s", to_string(s));
    out << buf;
  }
  out << "\n";
  char cell[48];
  for (std::size_t p = 0; p < table.params.size(); ++p) {
    std::snprintf(cell, sizeof(cell), "%-10s %7.3f ", table.params[p].c_str(),
                  table.true_values[p]);
    out << cell;
    for (std::size_t s = 0; s < table.strategies.size(); ++s) {
      std::snprintf(cell, sizeof(cell), "%.3f(%.3f)", table.mean_error(s, p),
                    table.sd_error(s, p));
      std::string c = cell;
      c.resize(16, ' ');
      out << c;
    }
    out << "\n";
  }
  for (std::size_t s = 0; s < table.strategies.size(); ++s)
    if (table.failures[s] > 0)
      out << "# " << to_string(table.strategies[s]) << ": " << table.failures[s]
          << " failed replicate(s) excluded\n";
  return out.str();
}

std::string table_to_csv(const ReplicationTable& table) {
  std::ostringstream out;
  out << "study,n,reps,strategy,param,true,mean_error,sd_error,failures\n";
  for (std::size_t s = 0; s < table.strategies.size(); ++s)
    for (std::size_t p = 0; p < table.params.size(); ++p)
      out << to_string(table.study) << ',' << table.n << ',' << table.reps << ','
          << to_string(table.strategies[s]) << ',' << table.params[p] << ','
          << table.true_values[p] << ',' << table.mean_error(s, p) << ','
          << table.sd_error(s, p) << ',' << table.failures[s] << "\n";
  return out.str();
}

}  // namespace clssem

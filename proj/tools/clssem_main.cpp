#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include <json.hpp>

#include "clssem/estimator.hpp"
#include "clssem/fit.hpp"
#include "clssem/replication.hpp"

namespace {

using namespace clssem;

struct CommonFlags {
  std::string model_path;
  std::string data_path;
  std::string strategy = "w1";
  double penalty = 0.0;
  std::uint64_t seed = 0;
  std::size_t multistart = 5;
  std::size_t max_iterations = 2000;
  double gradient_tolerance = 1e-8;
  std::size_t wa_budget = 60;
  bool ww_iterate = false;
  std::size_t jobs = std::thread::hardware_concurrency();
};

EstimationConfig make_config(const CommonFlags& flags) {
  EstimationConfig cfg;
  cfg.opt.seed = flags.seed;
  cfg.opt.multistarts = flags.multistart;
  cfg.opt.max_iterations = flags.max_iterations;
  cfg.opt.gradient_tolerance = flags.gradient_tolerance;
  cfg.opt.wa_budget = flags.wa_budget;
  cfg.penalty = flags.penalty;
  cfg.ww_iterate = flags.ww_iterate;
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_model) {
  if (with_model) {
    cmd->add_option("--model", flags.model_path, "model file")->required();
    cmd->add_option("--data", flags.data_path, "CSV data file")->required();
    cmd->add_option("--strategy", flags.strategy, "weight strategy: w1|wn|ww|wo|wa")
        ->required();
  }
  cmd->add_option("--penalty", flags.penalty, "constraint penalty P (default: data-scaled)");
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--multistart", flags.multistart, "number of optimizer starts");
  cmd->add_option("--maxiter", flags.max_iterations, "max optimizer iterations");
  cmd->add_option("--gtol", flags.gradient_tolerance, "relative gradient tolerance");
  cmd->add_option("--wa-budget", flags.wa_budget, "outer evaluation budget for strategy wa");
  cmd->add_flag("--ww-iterate", flags.ww_iterate,
                "expert: iterate the ww reweighting up to 3 times");
  cmd->add_option("--jobs", flags.jobs, "worker threads for replicates/permutations");
}

void print_interpretation_notes(const Model& model) {
  for (const ConstraintDecl& c : model.constraints)
    if (c.kind == ConstraintKind::normalize) {
      std::cerr << "note: normalize(" << model.symbols.name_of(SymbolKind::latent, c.latent)
                << ") is enforced as sum_i Z_i^2 = n (unit variance)\n";
    }
  for (const std::string& w : model.warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_estimate(const CommonFlags& flags, const std::string& out_path,
                 const std::string& scores_path, const std::string& chisq_mode) {
  const Model model = parse_model_file(flags.model_path);
  const Dataset data = Dataset::from_csv_file(flags.data_path);
  print_interpretation_notes(model);

  EstimationConfig cfg = make_config(flags);
  cfg.opt.parallel_starts = flags.jobs > 1;
  cfg.opt.jobs = flags.jobs;
  const EstimationResult result =
      estimate(model, data, parse_strategy(flags.strategy), cfg);

  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::printf("strategy %s  f_min %.9g  R %.6f  converged %s  uniqueness %s\n",
              to_string(result.strategy), result.f_min, result.fit_r,
              result.optim.converged ? "yes" : "no", to_string(result.uniqueness).c_str());
  for (std::size_t i = 0; i < result.param_names.size(); ++i)
    std::printf("  %-12s %10.3f\n", result.param_names[i].c_str(), result.param_values[i]);

  std::string json = result_to_json(result);
  if (!chisq_mode.empty()) {
    if (chisq_mode != "naive" && chisq_mode != "equations") {
      std::cerr << "error: --chisq expects 'naive' or 'equations'\n";
      return 1;
    }
    // both df conventions are experimental; the assumptions are the user's
    const ChiSquareFit chi = chi_square_fit(
        result, chisq_mode == "naive" ? DfMode::naive : DfMode::equations);
    std::printf("chi-square (%s df): statistic %.3f  df %.0f  p %.4g\n", chisq_mode.c_str(),
                chi.statistic, chi.df, chi.p_value);
    auto j = nlohmann::json::parse(json);
    j["fit"]["chi_square"] = {{"statistic", chi.statistic},
                              {"df", chi.df},
                              {"p_value", chi.p_value},
                              {"df_mode", chisq_mode}};
    json = j.dump(2);
  }

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "error: cannot write '" << out_path << "'\n";
      return 1;
    }
    out << json << "\n";
  }
  if (!scores_path.empty()) {
    Dataset scores;
    scores.columns = result.latent_names;
    scores.a = result.latent_scores;
    scores.to_csv_file(scores_path);
  }
  return result.optim.converged ? 0 : 2;
}

int cmd_simulate(const std::string& study_name, std::size_t n, std::uint64_t seed,
                 const std::vector<std::string>& param_overrides, const std::string& out_path,
                 const std::string& truth_path) {
  SimSpec spec;
  spec.study = parse_study(study_name);
  spec.n = n;
  spec.seed = seed;
  for (const std::string& kv : param_overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --param expects name=value, got '" << kv << "'\n";
      return 1;
    }
    spec.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
  }
  const SimData sim = generate(spec);
  sim.data.to_csv_file(out_path);
  std::printf("wrote %zu cases x %zu columns to %s\n", sim.data.n_cases(),
              sim.data.n_columns(), out_path.c_str());
  if (!truth_path.empty()) {
    nlohmann::json j;
    j["params"] = sim.true_params;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < sim.true_latents.rows; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t q = 0; q < sim.true_latents.cols; ++q)
        row.push_back(sim.true_latents(i, q));
      rows.push_back(std::move(row));
    }
    j["latents"] = {{"columns", sim.latent_names}, {"data", std::move(rows)}};
    std::ofstream out(truth_path);
    out << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_replicate(const CommonFlags& flags, const std::string& study_name, std::size_t n,
                  std::size_t reps, const std::string& strategies_csv,
                  const std::string& out_path) {
  ReplicationRequest req;
  req.study = parse_study(study_name);
  req.n = n;
  req.reps = reps;
  req.seed = flags.seed;
  req.jobs = flags.jobs;
  req.cfg = make_config(flags);
  std::string token;
  for (char c : strategies_csv + ",") {
    if (c == ',') {
      if (!token.empty()) req.strategies.push_back(parse_strategy(token));
      token.clear();
    } else {
      token += c;
    }
  }
  if (req.strategies.empty()) {
    std::cerr << "error: no strategies given\n";
    return 1;
  }

  const ReplicationTable table = replicate_study(req);
  std::cout << format_table(table);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << table_to_csv(table);
  }
  return 0;
}

int cmd_permtest(const CommonFlags& flags, std::size_t perms, bool identity,
                 const std::string& out_path) {
  const Model model = parse_model_file(flags.model_path);
  const Dataset data = Dataset::from_csv_file(flags.data_path);
  print_interpretation_notes(model);
  const EstimationConfig cfg = make_config(flags);
  const WeightStrategy strategy = parse_strategy(flags.strategy);

  const EstimationResult res = estimate(model, data, strategy, cfg);
  if (perms == 0) {
    std::printf("f_min %.9g  R %.6f  (no permutation null requested)\n", res.f_min,
                res.fit_r);
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      out << result_to_json(res) << "\n";
    }
    return res.optim.converged ? 0 : 2;
  }

  const PermutationNull null = permutation_null_fit(model, data, strategy, cfg, perms,
                                                    flags.seed, flags.jobs, identity);
  double lo = 0.0, hi = 0.0, mean = 0.0;
  if (!null.null_f_min.empty()) {
    lo = *std::min_element(null.null_f_min.begin(), null.null_f_min.end());
    hi = *std::max_element(null.null_f_min.begin(), null.null_f_min.end());
    for (double v : null.null_f_min) mean += v;
    mean /= static_cast<double>(null.null_f_min.size());
  }
  std::printf("original f_min %.9g  R %.6f\n", null.original_f_min,
              residual_mean_R(null.original_f_min, data.n_cases(), model.n_equations()));
  std::printf("null f_min over %zu permutation(s): min %.9g  mean %.9g  max %.9g\n",
              null.null_f_min.size(), lo, mean, hi);
  std::printf("null samples below original: %zu (fraction %.3f); failures %zu\n",
              null.exceedance_count, null.fraction_below, null.failures);

  if (!out_path.empty()) {
    auto j = nlohmann::json::parse(result_to_json(res));
    j["fit"]["permutation"] = {{"null_f_min", null.null_f_min},
                               {"exceedance_count", null.exceedance_count},
                               {"fraction_below", null.fraction_below},
                               {"failures", null.failures},
                               {"identity_debug", identity}};
    std::ofstream out(out_path);
    out << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"case-based least-squares structural equation modeling"};
  app.require_subcommand(1);
  // top-level --config with one [section] per subcommand; flags always win
  app.set_config("--config", "", "read defaults from a key=value config file");

  CommonFlags flags;

  auto* est = app.add_subcommand("estimate", "estimate a model from case data");
  std::string out_path, scores_path, chisq_mode;
  add_common(est, flags, true);
  est->add_option("--out", out_path, "write the result JSON here");
  est->add_option("--scores", scores_path, "write latent scores CSV here");
  est->add_option("--chisq", chisq_mode,
                  "add a chi-square fit test with 'naive' or 'equations' df");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic study dataset");
  std::string study_name, sim_out, truth_path;
  std::size_t sim_n = 100;
  std::uint64_t sim_seed = 0;
  std::vector<std::string> param_overrides;
  sim->add_option("--study", study_name,
                  "regression|democracy|ganzach|muthen|exponential|implicative")
      ->required();
  sim->add_option("--n", sim_n, "cases")->required();
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--param", param_overrides, "override generator parameter, name=value");
  sim->add_option("--out", sim_out, "output CSV")->required();
  sim->add_option("--truth", truth_path, "write true parameters/latents JSON here");

  auto* rep = app.add_subcommand("replicate", "run a Monte-Carlo replication study");
  std::string rep_study, rep_strategies = "w1,wn,ww", rep_out;
  std::size_t rep_n = 100, rep_reps = 25;
  rep->add_option("--study", rep_study, "study tag")->required();
  rep->add_option("--n", rep_n, "cases per replicate")->required();
  rep->add_option("--reps", rep_reps, "number of replicates");
  rep->add_option("--strategies", rep_strategies, "comma-separated strategy list");
  rep->add_option("--out", rep_out, "write machine-readable CSV here");
  add_common(rep, flags, false);

  auto* perm = app.add_subcommand("permtest", "permutation-null fit comparison");
  std::size_t perms = 20;
  bool identity = false;
  std::string perm_out;
  add_common(perm, flags, true);
  perm->add_option("--perms", perms, "number of column permutations");
  perm->add_flag("--identity", identity, "debug: use the identity permutation");
  perm->add_option("--out", perm_out, "write the result JSON (with the null summary) here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
  }

  try {
    if (est->parsed()) return cmd_estimate(flags, out_path, scores_path, chisq_mode);
    if (sim->parsed())
      return cmd_simulate(study_name, sim_n, sim_seed, param_overrides, sim_out, truth_path);
    if (rep->parsed())
      return cmd_replicate(flags, rep_study, rep_n, rep_reps, rep_strategies, rep_out);
    if (perm->parsed()) return cmd_permtest(flags, perms, identity, perm_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

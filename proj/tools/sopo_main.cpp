// Command-line runner: seeded experiments with CSV traces, the oracle
// cross-check suite, and the theory schedule calculator.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sopo/config.hpp"
#include "sopo/oracles.hpp"
#include "sopo/runner.hpp"
#include "sopo/schedule.hpp"

namespace {

constexpr int kExitConfigError = 1;
constexpr int kExitCheckFailure = 2;

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  sopo::ExperimentConfig cfg;
  try {
    cfg = config_path.empty() ? sopo::config_from_overrides(overrides)
                              : sopo::load_config(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  try {
    const auto traces = sopo::run_experiment(cfg);
    long total_steps = 0;
    for (const auto& trace : traces)
      if (!trace.empty()) total_steps += trace.back().env_steps;
    std::cout << sopo::algorithm_to_string(cfg.algorithm) << ": " << traces.size()
              << " run(s), " << total_steps << " env steps total, output in " << cfg.out_dir
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitCheckFailure;
  }
  return 0;
}

int cmd_oracle(const std::string& scope, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<sopo::oracle::CheckResult> results;
  if (scope == "solver" || scope == "all") {
    const auto r = sopo::oracle::solver_checks(seed);
    results.insert(results.end(), r.begin(), r.end());
  }
  if (scope == "estimators" || scope == "all") {
    const auto r = sopo::oracle::estimator_checks(seed);
    results.insert(results.end(), r.begin(), r.end());
  }
  if (results.empty()) {
    std::cerr << "unknown oracle scope '" << scope << "' (expected solver|estimators|all)\n";
    return kExitConfigError;
  }
  int failures = 0;
  for (const auto& r : results) {
    std::printf("%s,%s,%.6g,%.6g,%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.observed,
                r.tolerance, r.note.c_str());
    if (!r.pass) ++failures;
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::printf("# %zu checks, %d failed, %.2f s\n", results.size(), failures, elapsed);
  return failures == 0 ? 0 : kExitCheckFailure;
}

int cmd_schedule(double epsilon, const std::string& variant_name, long dim, double delta_j,
                 const std::string& constants_file) {
  sopo::TheoryConstants constants;
  if (!constants_file.empty()) {
    // flat key = value file matching the TheoryConstants fields
    std::ifstream in(constants_file);
    if (!in) {
      std::cerr << "config error: cannot open " << constants_file << "\n";
      return kExitConfigError;
    }
    std::string key;
    double value;
    while (in >> key >> value) {
      if (key == "R") constants.reward_bound = value;
      else if (key == "G") constants.score_bound = value;
      else if (key == "L") constants.hessian_bound = value;
      else if (key == "gamma") constants.gamma = value;
      else if (key == "H") constants.horizon = static_cast<int>(value);
      else if (key == "M") constants.hess_lipschitz = value;
      else if (key == "C") constants.subspace_c = value;
      else if (key == "delta_J") delta_j = value;
      else {
        std::cerr << "config error: unknown constant '" << key << "'\n";
        return kExitConfigError;
      }
    }
  }
  try {
    const auto variant = sopo::schedule_variant_from_string(variant_name);
    const sopo::ScheduleConfig cfg =
        sopo::theory_schedule(constants, epsilon, dim, variant, delta_j);
    std::printf("variant          %s\n", variant_name.c_str());
    std::printf("epsilon          %g\n", cfg.epsilon);
    std::printf("G_g              %g\n", constants.grad_moment_bound());
    std::printf("G_H              %g\n", constants.hess_moment_bound());
    std::printf("batch_grad       %ld\n", cfg.batch_grad);
    std::printf("batch_hess       %ld\n", cfg.batch_hess);
    if (variant == sopo::ScheduleVariant::dvr || variant == sopo::ScheduleVariant::fdtr_vr) {
      std::printf("batch_epoch      %ld\n", cfg.batch_epoch);
      std::printf("batch_havr       %ld\n", cfg.batch_havr);
      std::printf("q                %ld\n", cfg.epoch_length);
    }
    std::printf("iterations       %ld\n", cfg.iterations);
    std::printf("delta            %g\n", cfg.delta);
    std::printf("total_samples    %g\n", cfg.total_samples);
    std::printf("complexity_bound %g\n", cfg.complexity_samples);
  } catch (const std::exception& e) {
    std::cerr << "schedule error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic dimension-reduced second-order policy optimization lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string algo, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false, algo_set = false, out_set = false;

  auto* run = app.add_subcommand("run", "Run a seeded experiment and emit CSV traces");
  run->add_option("--config", config_path, "flat key = value config file");
  auto* seed_opt = run->add_option("--seed", seed, "root seed (overrides config)");
  auto* algo_opt = run->add_option("--algo", algo, "algorithm (overrides config)");
  auto* out_opt = run->add_option("--out", out_dir, "output directory (overrides config)");
  run->add_option("--override", overrides, "key=value override, repeatable");

  std::string scope = "all";
  std::uint64_t oracle_seed = 20240u;
  auto* oracle = app.add_subcommand("oracle", "Run the exact-oracle cross-check suite");
  oracle->add_option("scope", scope, "solver | estimators | all");
  oracle->add_option("--seed", oracle_seed, "seed for the randomized checks");

  double epsilon = 0.01;
  std::string variant = "dr";
  long dim = 15;
  double delta_j = 1.0;
  std::string constants_file;
  auto* schedule = app.add_subcommand("schedule", "Print the theory-driven schedule");
  schedule->add_option("--epsilon", epsilon, "target accuracy")->required();
  schedule->add_option("--variant", variant, "dr | dvr | fdtr | fdtr-vr");
  schedule->add_option("--dim", dim, "parameter dimension (enters log d)");
  schedule->add_option("--delta-j", delta_j, "initial optimality gap bound");
  schedule->add_option("--constants", constants_file, "constants file (R G L gamma H M C)");

  CLI11_PARSE(app, argc, argv);

  seed_set = seed_opt->count() > 0;
  algo_set = algo_opt->count() > 0;
  out_set = out_opt->count() > 0;
  if (run->parsed()) {
    if (seed_set) overrides.push_back("seed=" + std::to_string(seed));
    if (algo_set) overrides.push_back("algorithm=" + algo);
    if (out_set) overrides.push_back("out=" + out_dir);
    return cmd_run(config_path, overrides);
  }
  if (oracle->parsed()) return cmd_oracle(scope, oracle_seed);
  if (schedule->parsed()) return cmd_schedule(epsilon, variant, dim, delta_j, constants_file);
  return kExitConfigError;
}

#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sopo/optimizers.hpp"

namespace sopo {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Algorithm { reinforce, hapg, dr_sopo, dvr_sopo, fdtr_sopo, fdtr_vrsopo };

Algorithm algorithm_from_string(const std::string& name);
std::string algorithm_to_string(Algorithm algo);

// A full experiment: algorithm, environment, batch schedule, seeding and
// output location. Loaded from a flat key = value file with '#' comments;
// command-line overrides replace individual keys.
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::dr_sopo;
  bool practical = true;      // radius-free + ratio test (DR/DVR only)

  // environment: either a fixture path or a seeded random instance
  std::string mdp_fixture;
  std::uint64_t mdp_seed = 7;
  int mdp_states = 5;
  int mdp_actions = 3;
  double mdp_reward_bound = 1.0;
  double gamma = 0.95;        // overrides the fixture value when set in the file
  int horizon = 20;

  long batch_grad = 50;
  long batch_hess = 10;
  long batch_epoch = 50;
  long batch_havr = 10;
  long epoch_length = 5;
  double delta = 0.1;         // basic variants
  double delta_max = 2.0;     // practical variants
  double eta = 0.001;
  double mu = 1.0;
  double learning_rate = 0.01;
  double lambda_init = 0.01;
  double lambda_min = 1e-8;
  bool use_baseline = false;
  bool exact_eval = true;     // record exact gradient norms / initial value via DP

  long iterations = 1000;
  long env_step_budget = 200000;
  std::uint64_t seed = 1;
  int repeats = 1;
  std::string out_dir = "out";

  bool gamma_set = false;     // whether the config overrode the fixture gamma
  bool horizon_set = false;

  void validate() const;  // throws ConfigError
};

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig config_from_overrides(const std::vector<std::string>& overrides);

// Resolves the configured environment (fixture file or seeded random MDP).
MdpFixture resolve_mdp(const ExperimentConfig& cfg);

}  // namespace sopo

#include "sopo/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

namespace sopo {

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "reinforce") return Algorithm::reinforce;
  if (name == "hapg") return Algorithm::hapg;
  if (name == "dr-sopo") return Algorithm::dr_sopo;
  if (name == "dvr-sopo") return Algorithm::dvr_sopo;
  if (name == "fdtr-sopo") return Algorithm::fdtr_sopo;
  if (name == "fdtr-vrsopo") return Algorithm::fdtr_vrsopo;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected reinforce|hapg|dr-sopo|dvr-sopo|fdtr-sopo|fdtr-vrsopo)");
}

std::string algorithm_to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::reinforce: return "reinforce";
    case Algorithm::hapg: return "hapg";
    case Algorithm::dr_sopo: return "dr-sopo";
    case Algorithm::dvr_sopo: return "dvr-sopo";
    case Algorithm::fdtr_sopo: return "fdtr-sopo";
    case Algorithm::fdtr_vrsopo: return "fdtr-vrsopo";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

template <typename T, typename Parse>
T parse_num(const std::string& v, const std::string& where, Parse parse) {
  try {
    std::size_t pos = 0;
    T out = parse(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(where + ": cannot parse '" + v + "'");
  }
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
               const std::string& where) {
  const auto to_l = [&](const std::string& v) {
    return parse_num<long>(v, where, [](const std::string& s, std::size_t* p) {
      return std::stol(s, p);
    });
  };
  const auto to_d = [&](const std::string& v) {
    return parse_num<double>(v, where, [](const std::string& s, std::size_t* p) {
      return std::stod(s, p);
    });
  };
  const auto to_u64 = [&](const std::string& v) {
    return parse_num<std::uint64_t>(v, where, [](const std::string& s, std::size_t* p) {
      return static_cast<std::uint64_t>(std::stoull(s, p));
    });
  };

  if (key == "algorithm") cfg.algorithm = algorithm_from_string(value);
  else if (key == "practical") cfg.practical = parse_bool(value, where);
  else if (key == "mdp") cfg.mdp_fixture = value;
  else if (key == "mdp_seed") cfg.mdp_seed = to_u64(value);
  else if (key == "mdp_states") cfg.mdp_states = static_cast<int>(to_l(value));
  else if (key == "mdp_actions") cfg.mdp_actions = static_cast<int>(to_l(value));
  else if (key == "mdp_reward_bound") cfg.mdp_reward_bound = to_d(value);
  else if (key == "gamma") { cfg.gamma = to_d(value); cfg.gamma_set = true; }
  else if (key == "horizon") { cfg.horizon = static_cast<int>(to_l(value)); cfg.horizon_set = true; }
  else if (key == "batch_grad") cfg.batch_grad = to_l(value);
  else if (key == "batch_hess") cfg.batch_hess = to_l(value);
  else if (key == "batch_epoch") cfg.batch_epoch = to_l(value);
  else if (key == "batch_havr") cfg.batch_havr = to_l(value);
  else if (key == "q") cfg.epoch_length = to_l(value);
  else if (key == "delta") cfg.delta = to_d(value);
  else if (key == "delta_max") cfg.delta_max = to_d(value);
  else if (key == "eta") cfg.eta = to_d(value);
  else if (key == "mu") cfg.mu = to_d(value);
  else if (key == "learning_rate") cfg.learning_rate = to_d(value);
  else if (key == "lambda_init") cfg.lambda_init = to_d(value);
  else if (key == "lambda_min") cfg.lambda_min = to_d(value);
  else if (key == "use_baseline") cfg.use_baseline = parse_bool(value, where);
  else if (key == "exact_eval") cfg.exact_eval = parse_bool(value, where);
  else if (key == "iterations") cfg.iterations = to_l(value);
  else if (key == "env_step_budget") cfg.env_step_budget = to_l(value);
  else if (key == "seed") cfg.seed = to_u64(value);
  else if (key == "repeats") cfg.repeats = static_cast<int>(to_l(value));
  else if (key == "out") cfg.out_dir = value;
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form key=value");
    apply_key(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)), "override " + ov);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto positive = [](long v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(batch_grad, "batch_grad");
  positive(batch_hess, "batch_hess");
  positive(batch_epoch, "batch_epoch");
  positive(batch_havr, "batch_havr");
  positive(epoch_length, "q");
  positive(repeats, "repeats");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (env_step_budget < 0) throw ConfigError("env_step_budget must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in [0, 1)");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  if (!(delta_max > 0.0)) throw ConfigError("delta_max must be positive");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must be in (0, 1)");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu must be in [0, 1]");
  if (mdp_fixture.empty()) {
    if (mdp_states < 1 || mdp_actions < 1) throw ConfigError("mdp sizes must be >= 1");
    if (!(mdp_reward_bound > 0.0)) throw ConfigError("mdp_reward_bound must be positive");
  } else {
    std::ifstream probe(mdp_fixture);
    if (!probe) throw ConfigError("mdp fixture '" + mdp_fixture + "' does not exist");
  }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

ExperimentConfig config_from_overrides(const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

MdpFixture resolve_mdp(const ExperimentConfig& cfg) {
  MdpFixture fx;
  if (!cfg.mdp_fixture.empty()) {
    fx = load_mdp(cfg.mdp_fixture);
    if (cfg.gamma_set) fx.mdp.gamma = cfg.gamma;
    if (cfg.horizon_set) fx.horizon = cfg.horizon;
  } else {
    fx.mdp = random_mdp(cfg.mdp_seed, cfg.mdp_states, cfg.mdp_actions, cfg.mdp_reward_bound,
                        cfg.gamma);
    fx.horizon = cfg.horizon;
  }
  fx.mdp.validate();
  return fx;
}

}  // namespace sopo

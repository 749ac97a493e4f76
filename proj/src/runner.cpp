#include "sopo/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sopo {

namespace {

TraceRecord initial_record(Problem& problem, const Eigen::VectorXd& theta0, bool exact_eval) {
  TraceRecord rec;
  rec.t = 0;
  rec.env_steps = 0;
  rec.accepted = true;
  if (exact_eval && problem.has_exact()) {
    rec.mean_return = -problem.exact_value(theta0);
    rec.exact_grad_norm = problem.exact_gradient(theta0).norm();
  }
  return rec;
}

}  // namespace

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  const MdpFixture fx = resolve_mdp(cfg);
  MdpProblemOptions opts;
  opts.mu = cfg.mu;
  opts.use_baseline = cfg.use_baseline;
  opts.exact_oracles = cfg.exact_eval;
  MdpProblem problem(fx.mdp, SoftmaxPolicy(fx.mdp.n_states, fx.mdp.n_actions), fx.horizon, opts);

  Rng rng(run_seed);
  OptimizerState state = init_state(Eigen::VectorXd::Zero(problem.dim()));
  state.delta = cfg.delta;

  ScheduleConfig basic;
  basic.batch_grad = cfg.batch_grad;
  basic.batch_hess = cfg.batch_hess;
  basic.batch_epoch = cfg.batch_epoch;
  basic.batch_havr = cfg.batch_havr;
  basic.epoch_length = cfg.epoch_length;
  basic.delta = cfg.delta;

  PracticalConfig practical;
  practical.delta_max = cfg.delta_max;
  practical.eta = cfg.eta;
  practical.epoch_length = cfg.epoch_length;
  practical.batch_grad = cfg.batch_grad;
  practical.batch_hess = cfg.batch_hess;
  practical.batch_epoch = cfg.batch_epoch;
  practical.batch_havr = cfg.batch_havr;
  practical.lambda_init = cfg.lambda_init;
  practical.lambda_min = cfg.lambda_min;

  SgdConfig sgd;
  sgd.learning_rate = cfg.learning_rate;
  sgd.batch_grad = cfg.algorithm == Algorithm::hapg ? cfg.batch_epoch : cfg.batch_grad;
  sgd.batch_havr = cfg.batch_havr;
  sgd.epoch_length = cfg.epoch_length;

  RunResult result;
  result.trace.push_back(initial_record(problem, state.theta, cfg.exact_eval));

  while (state.t < cfg.iterations && state.cumulative_env_steps < cfg.env_step_budget) {
    TraceRecord rec;
    switch (cfg.algorithm) {
      case Algorithm::reinforce:
        rec = reinforce_step(state, problem, sgd, rng);
        break;
      case Algorithm::hapg:
        rec = hapg_step(state, problem, sgd, rng);
        break;
      case Algorithm::dr_sopo:
        rec = cfg.practical
                  ? practical_step(state, problem, practical, PracticalVariant::dr, rng)
                  : drsopo_step(state, problem, basic, rng);
        break;
      case Algorithm::dvr_sopo:
        rec = cfg.practical
                  ? practical_step(state, problem, practical, PracticalVariant::dvr, rng)
                  : dvrsopo_step(state, problem, basic, rng);
        break;
      case Algorithm::fdtr_sopo:
        rec = fdtr_step(state, problem, basic, false, rng);
        break;
      case Algorithm::fdtr_vrsopo:
        rec = fdtr_step(state, problem, basic, true, rng);
        break;
    }
    if (!cfg.exact_eval) rec.exact_grad_norm = std::numeric_limits<double>::quiet_NaN();
    result.trace.push_back(rec);
  }
  result.final_theta = state.theta;
  result.final_t = state.t;
  result.final_env_steps = state.cumulative_env_steps;
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<std::vector<TraceRecord>>& traces,
                                  double max_env_steps, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("summarize: need at least two grid points");
  std::vector<SummaryRow> rows(grid_points);
  for (int k = 0; k < grid_points; ++k)
    rows[k].env_steps = max_env_steps * static_cast<double>(k) / (grid_points - 1);

  // piecewise-linear return vs env-steps per run, clamped at the endpoints
  const auto value_at = [](const std::vector<TraceRecord>& trace, double x) {
    double prev_x = 0.0, prev_y = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : trace) {
      if (std::isnan(r.mean_return)) continue;
      const double rx = static_cast<double>(r.env_steps);
      if (std::isnan(prev_y)) {
        if (x <= rx) return r.mean_return;
      } else if (x <= rx) {
        const double w = rx > prev_x ? (x - prev_x) / (rx - prev_x) : 1.0;
        return prev_y + w * (r.mean_return - prev_y);
      }
      prev_x = rx;
      prev_y = r.mean_return;
    }
    return prev_y;  // beyond the last record: hold the final value
  };

  for (auto& row : rows) {
    double sum = 0.0, sum_sq = 0.0;
    int n = 0;
    for (const auto& trace : traces) {
      const double v = value_at(trace, row.env_steps);
      if (std::isnan(v)) continue;
      sum += v;
      sum_sq += v * v;
      ++n;
    }
    row.n = n;
    if (n > 0) {
      row.mean = sum / n;
      row.stddev = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / (n - 1))) : 0.0;
    }
  }
  return rows;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "env_steps,mean_return_mean,mean_return_std,n_runs\n";
  for (const auto& r : rows)
    out << r.env_steps << "," << r.mean << "," << r.stddev << "," << r.n << "\n";
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty summary");
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    SummaryRow r;
    std::getline(ss, field, ','); r.env_steps = std::stod(field);
    std::getline(ss, field, ','); r.mean = std::stod(field);
    std::getline(ss, field, ','); r.stddev = std::stod(field);
    std::getline(ss, field, ','); r.n = std::stoi(field);
    rows.push_back(r);
  }
  return rows;
}

void save_checkpoint(const std::string& path, const Eigen::VectorXd& theta, long t,
                     long env_steps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "tabular-softmax " << theta.size() << " " << t << " " << env_steps << "\n";
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << theta(i) << "\n";
}

std::vector<std::vector<TraceRecord>> run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::vector<std::vector<TraceRecord>> traces;
  traces.reserve(cfg.repeats);
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    const std::uint64_t run_seed = Rng::mix(cfg.seed, 0x5eedULL + rep);
    const RunResult result = run_single(cfg, run_seed);
    const std::string stem = (fs::path(cfg.out_dir) / ("run" + std::to_string(rep))).string();
    write_trace_csv(stem + "_trace.csv", result.trace);
    save_checkpoint(stem + "_theta.txt", result.final_theta, result.final_t,
                    result.final_env_steps);
    traces.push_back(result.trace);
  }
  const auto summary = summarize(traces, static_cast<double>(cfg.env_step_budget));
  write_summary_csv((fs::path(cfg.out_dir) / "summary.csv").string(), summary);
  return traces;
}

}  // namespace sopo

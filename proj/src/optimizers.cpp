#include "sopo/optimizers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sopo {

OptimizerState init_state(const Eigen::VectorXd& theta0) {
  OptimizerState s;
  s.theta = theta0;
  s.d_prev = Eigen::VectorXd::Zero(theta0.size());
  s.last_move = Eigen::VectorXd::Zero(theta0.size());
  s.g_est = Eigen::VectorXd::Zero(theta0.size());
  return s;
}

namespace {

constexpr double kZeroReduction = 1e-14;

struct ReducedStep {
  Eigen::VectorXd step;
  TRSolution sol;
  TwoDimModel model;
  bool used_1d = false;
  double min_eig = std::numeric_limits<double>::quiet_NaN();
  double delta_used = 0.0;
};

// DRTR solve in span{g, d_prev} with the 1D fallback for degenerate spans.
ReducedStep solve_reduced(const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev,
                          const HvpFn& hvp, double delta) {
  ReducedStep rs;
  rs.delta_used = delta;
  if (g.norm() == 0.0) {
    rs.step = Eigen::VectorXd::Zero(g.size());
    rs.used_1d = true;
    return rs;
  }
  if (span_degenerate(g, d_prev)) {
    const double g2 = g.squaredNorm();
    const double ghg = g.dot(hvp(g));
    rs.sol = solve_drtr_1d(g2, ghg, delta);
    rs.step = -rs.sol.alpha(0) * g;
    rs.used_1d = true;
    rs.min_eig = ghg / g2;
    return rs;
  }
  rs.model = build_drtr_data(g, d_prev, hvp, delta);
  rs.sol = solve_drtr(rs.model);
  rs.step = lift_direction(rs.sol.alpha, g, d_prev);
  rs.min_eig = min_pencil_eigenvalue(rs.model.Q, rs.model.G);
  return rs;
}

// Retry once at half the radius when the multiplier search stalls.
ReducedStep solve_reduced_with_retry(const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev,
                                     const HvpFn& hvp, double delta) {
  try {
    return solve_reduced(g, d_prev, hvp, delta);
  } catch (const NoConvergence&) {
    return solve_reduced(g, d_prev, hvp, 0.5 * delta);
  }
}

double exact_grad_norm_or_nan(Problem& problem, const Eigen::VectorXd& theta) {
  if (!problem.has_exact()) return std::numeric_limits<double>::quiet_NaN();
  return problem.exact_gradient(theta).norm();
}

void fill_diag(StepDiagnostics* diag, const ReducedStep& rs, const Eigen::VectorXd& g,
               const Eigen::VectorXd& d_basis, std::shared_ptr<HvpOperator> hvp) {
  if (!diag) return;
  diag->solved = true;
  diag->used_1d_fallback = rs.used_1d;
  diag->model = rs.model;
  diag->solution = rs.sol;
  diag->g = g;
  diag->d_basis = d_basis;
  diag->step = rs.step;
  diag->delta_used = rs.delta_used;
  diag->hvp = std::move(hvp);
}

// Shared tail of the basic DRTR-based steps.
TraceRecord basic_reduced_update(OptimizerState& state, Problem& problem,
                                 const ScheduleConfig& schedule, const GradEstimate& grad,
                                 double mean_cost, long env_steps, Rng& rng,
                                 StepDiagnostics* diag) {
  auto hop = problem.sample_hessian(state.theta, schedule.batch_hess, rng);
  env_steps += hop->env_steps();
  // recursion iterations have no gradient batch at theta_t; fall back to the
  // Hessian batch returns, then to the exact oracle
  if (std::isnan(mean_cost)) mean_cost = hop->mean_return();
  if (std::isnan(mean_cost) && problem.has_exact()) mean_cost = problem.exact_value(state.theta);
  const Eigen::VectorXd d_basis = state.d_prev;
  const ReducedStep rs =
      solve_reduced_with_retry(grad.g, d_basis, hop->as_fn(), schedule.delta);
  fill_diag(diag, rs, grad.g, d_basis, hop);

  TraceRecord rec;
  rec.mean_return = -mean_cost;
  rec.grad_norm_estimate = grad.g.norm();
  rec.exact_grad_norm = exact_grad_norm_or_nan(problem, state.theta);
  rec.lambda = rs.sol.lambda;
  rec.min_subspace_eig = rs.min_eig;
  rec.accepted = true;

  state.theta += rs.step;
  state.d_prev = rs.step;
  state.last_move = rs.step;
  state.g_est = grad.g;
  state.t += 1;
  state.epoch_pos = schedule.epoch_length > 0 ? state.t % schedule.epoch_length : 0;
  state.cumulative_env_steps = env_steps;
  rec.t = state.t;
  rec.env_steps = env_steps;
  return rec;
}

}  // namespace

TraceRecord drsopo_step(OptimizerState& state, Problem& problem, const ScheduleConfig& schedule,
                        Rng& rng, StepDiagnostics* diag) {
  long env_steps = state.cumulative_env_steps;
  const GradEstimate grad =
      problem.sample_gradient(state.theta, schedule.batch_grad, rng, env_steps);
  return basic_reduced_update(state, problem, schedule, grad, grad.mean_return, env_steps, rng,
                              diag);
}

TraceRecord dvrsopo_step(OptimizerState& state, Problem& problem, const ScheduleConfig& schedule,
                         Rng& rng, StepDiagnostics* diag) {
  long env_steps = state.cumulative_env_steps;
  GradEstimate grad;
  double mean_cost;
  if (state.epoch_pos == 0) {
    grad = problem.sample_gradient(state.theta, schedule.batch_epoch, rng, env_steps);
    mean_cost = grad.mean_return;
  } else {
    const Eigen::VectorXd theta_prev = state.theta - state.last_move;
    const Eigen::VectorXd xi = problem.sample_gradient_diff(theta_prev, state.theta,
                                                            schedule.batch_havr, rng, env_steps);
    grad.g = state.g_est + xi;
    grad.n_trajectories = schedule.batch_havr;
    mean_cost = std::numeric_limits<double>::quiet_NaN();  // filled from the Hessian batch
  }
  return basic_reduced_update(state, problem, schedule, grad, mean_cost, env_steps, rng, diag);
}

TraceRecord fdtr_step(OptimizerState& state, Problem& problem, const ScheduleConfig& schedule,
                      bool variance_reduced, Rng& rng) {
  long env_steps = state.cumulative_env_steps;
  GradEstimate grad;
  bool grad_at_theta = true;
  if (!variance_reduced || state.epoch_pos == 0) {
    const long n = variance_reduced ? schedule.batch_epoch : schedule.batch_grad;
    grad = problem.sample_gradient(state.theta, n, rng, env_steps);
  } else {
    const Eigen::VectorXd theta_prev = state.theta - state.last_move;
    const Eigen::VectorXd xi = problem.sample_gradient_diff(theta_prev, state.theta,
                                                            schedule.batch_havr, rng, env_steps);
    grad.g = state.g_est + xi;
    grad_at_theta = false;
  }
  auto hop = problem.sample_hessian(state.theta, schedule.batch_hess, rng);
  env_steps += hop->env_steps();
  const FdtrSolution sol = solve_fdtr_steihaug(grad.g, hop->as_fn(), schedule.delta, 1e-6,
                                               static_cast<int>(problem.dim()));

  TraceRecord rec;
  rec.mean_return = -(grad_at_theta ? grad.mean_return : hop->mean_return());
  rec.grad_norm_estimate = grad.g.norm();
  rec.exact_grad_norm = exact_grad_norm_or_nan(problem, state.theta);
  rec.lambda = sol.lambda_hat;
  rec.accepted = true;

  state.theta += sol.d;
  state.d_prev = sol.d;
  state.last_move = sol.d;
  state.g_est = grad.g;
  state.t += 1;
  state.epoch_pos = schedule.epoch_length > 0 ? state.t % schedule.epoch_length : 0;
  state.cumulative_env_steps = env_steps;
  rec.t = state.t;
  rec.env_steps = env_steps;
  return rec;
}

TraceRecord practical_step(OptimizerState& state, Problem& problem, const PracticalConfig& cfg,
                           PracticalVariant variant, Rng& rng, StepDiagnostics* diag) {
  long env_steps = state.cumulative_env_steps;
  if (state.lambda <= 0.0) state.lambda = cfg.lambda_init;

  // The ratio test reads a noisy difference of two value estimates. The
  // candidate batch replays the rollout streams of the batch already drawn
  // at theta_t (an rng copy taken just before that batch), so the pair is
  // coupled and the difference isolates the policy change instead of
  // drowning in independent return noise.
  GradEstimate grad;
  double cost_at_theta;
  long value_batch;
  std::shared_ptr<HvpOperator> hop;
  Rng coupled = rng;
  if (variant == PracticalVariant::dr) {
    grad = problem.sample_gradient(state.theta, cfg.batch_grad, rng, env_steps);
    hop = problem.sample_hessian(state.theta, cfg.batch_hess, rng);
    cost_at_theta = grad.mean_return;
    value_batch = cfg.batch_grad;
  } else if (state.epoch_pos == 0) {
    grad = problem.sample_gradient(state.theta, cfg.batch_epoch, rng, env_steps);
    hop = problem.sample_hessian(state.theta, cfg.batch_hess, rng);
    cost_at_theta = grad.mean_return;
    value_batch = cfg.batch_epoch;
  } else {
    const Eigen::VectorXd theta_prev = state.theta - state.last_move;
    const Eigen::VectorXd xi = problem.sample_gradient_diff(theta_prev, state.theta,
                                                            cfg.batch_havr, rng, env_steps);
    grad.g = state.g_est + xi;
    coupled = rng;  // pair with the Hessian batch, the one drawn at theta_t
    hop = problem.sample_hessian(state.theta, cfg.batch_hess, rng);
    // the gradient batch lives at interpolated parameters, so the cost
    // estimate at theta_t comes from the Hessian batch
    cost_at_theta = hop->mean_return();
    value_batch = cfg.batch_hess;
  }
  env_steps += hop->env_steps();
  if (std::isnan(cost_at_theta) && problem.has_exact())
    cost_at_theta = problem.exact_value(state.theta);

  TraceRecord rec;
  rec.grad_norm_estimate = grad.g.norm();
  rec.exact_grad_norm = exact_grad_norm_or_nan(problem, state.theta);
  rec.mean_return = -cost_at_theta;

  // radius-free solve, bumping lambda until the system is positive definite
  const HvpFn hvp = hop->as_fn();
  Eigen::Vector2d alpha = Eigen::Vector2d::Zero();
  ReducedStep rs;
  bool solvable = grad.g.norm() > 0.0;
  if (solvable) {
    if (span_degenerate(grad.g, state.d_prev)) {
      rs.used_1d = true;
      const double g2 = grad.g.squaredNorm();
      const double ghg = grad.g.dot(hvp(grad.g));
      rs.min_eig = ghg / g2;
      int tries = 0;
      double denom = ghg + 2.0 * state.lambda * g2;
      while (denom <= 1e-12 * std::max(1.0, g2) && tries++ < 64) {
        state.lambda *= cfg.lambda_inc;
        denom = ghg + 2.0 * state.lambda * g2;
      }
      solvable = denom > 0.0;
      if (solvable) alpha << g2 / denom, 0.0;
      rs.model.Q << ghg, 0.0, 0.0, 0.0;
      rs.model.c << -g2, 0.0;
      rs.model.G << g2, 0.0, 0.0, 0.0;
    } else {
      rs.model = build_drtr_data(grad.g, state.d_prev, hvp, cfg.delta_max);
      rs.min_eig = min_pencil_eigenvalue(rs.model.Q, rs.model.G);
      int tries = 0;
      for (;;) {
        try {
          alpha = solve_radius_free(rs.model.Q, rs.model.c, rs.model.G, state.lambda);
          break;
        } catch (const IndefiniteSystem&) {
          state.lambda *= cfg.lambda_inc;
          if (++tries > 64) { solvable = false; break; }
        }
      }
    }
  }
  rec.lambda = state.lambda;
  rec.min_subspace_eig = rs.min_eig;
  const Eigen::VectorXd d_basis = state.d_prev;

  bool accepted = false;
  if (solvable) {
    if (alpha.norm() > cfg.delta_max) alpha *= cfg.delta_max / alpha.norm();
    // model reduction at the clipped coefficients
    const double reduction = -(rs.model.c.dot(alpha) + 0.5 * alpha.dot(rs.model.Q * alpha));
    const Eigen::VectorXd step = lift_direction(alpha, grad.g, state.d_prev);
    rs.sol.alpha = alpha;
    rs.sol.lambda = state.lambda;
    rs.sol.predicted_reduction = reduction;
    rs.step = step;
    if (reduction > kZeroReduction) {
      const double cost_candidate =
          problem.sample_value(state.theta + step, value_batch, coupled, env_steps);
      rec.rho = (cost_at_theta - cost_candidate) / reduction;
      if (rec.rho > cfg.eta) {
        accepted = true;
        state.theta += step;
        state.d_prev = step;
        state.last_move = step;
        state.lambda = std::max(state.lambda / cfg.lambda_dec, cfg.lambda_min);
      }
    }
  }
  if (!accepted) {
    state.last_move = Eigen::VectorXd::Zero(state.theta.size());
    state.lambda = state.lambda >= cfg.lambda_max ? cfg.lambda_init
                                                  : std::min(state.lambda * cfg.lambda_inc,
                                                             cfg.lambda_max);
  }
  fill_diag(diag, rs, grad.g, d_basis, hop);

  rec.accepted = accepted;
  state.g_est = grad.g;
  state.t += 1;
  state.epoch_pos = cfg.epoch_length > 0 ? state.t % cfg.epoch_length : 0;
  state.cumulative_env_steps = env_steps;
  rec.t = state.t;
  rec.env_steps = env_steps;
  return rec;
}

namespace {

TraceRecord normalized_sgd_update(OptimizerState& state, Problem& problem,
                                  const GradEstimate& grad, double mean_cost, double lr,
                                  long env_steps, long epoch_length) {
  TraceRecord rec;
  rec.mean_return = -mean_cost;
  rec.grad_norm_estimate = grad.g.norm();
  rec.exact_grad_norm = exact_grad_norm_or_nan(problem, state.theta);
  rec.accepted = true;

  const double gn = grad.g.norm();
  Eigen::VectorXd step = Eigen::VectorXd::Zero(state.theta.size());
  if (gn > 0.0 && lr != 0.0) step = -(lr / gn) * grad.g;
  state.theta += step;
  state.d_prev = step;
  state.last_move = step;
  state.g_est = grad.g;
  state.t += 1;
  state.epoch_pos = epoch_length > 0 ? state.t % epoch_length : 0;
  state.cumulative_env_steps = env_steps;
  rec.t = state.t;
  rec.env_steps = env_steps;
  return rec;
}

}  // namespace

TraceRecord reinforce_step(OptimizerState& state, Problem& problem, const SgdConfig& cfg,
                           Rng& rng) {
  long env_steps = state.cumulative_env_steps;
  const GradEstimate grad =
      problem.sample_gradient(state.theta, cfg.batch_grad, rng, env_steps);
  return normalized_sgd_update(state, problem, grad, grad.mean_return, cfg.learning_rate,
                               env_steps, 0);
}

TraceRecord hapg_step(OptimizerState& state, Problem& problem, const SgdConfig& cfg, Rng& rng) {
  long env_steps = state.cumulative_env_steps;
  GradEstimate grad;
  double mean_cost = std::numeric_limits<double>::quiet_NaN();
  if (state.epoch_pos == 0) {
    grad = problem.sample_gradient(state.theta, cfg.batch_grad, rng, env_steps);
    mean_cost = grad.mean_return;
  } else {
    const Eigen::VectorXd theta_prev = state.theta - state.last_move;
    const Eigen::VectorXd xi = problem.sample_gradient_diff(theta_prev, state.theta,
                                                            cfg.batch_havr, rng, env_steps);
    grad.g = state.g_est + xi;
    if (problem.has_exact()) mean_cost = problem.exact_value(state.theta);
  }
  return normalized_sgd_update(state, problem, grad, mean_cost, cfg.learning_rate, env_steps,
                               cfg.epoch_length);
}

void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "t,env_steps,mean_return,grad_norm,exact_grad_norm,lambda,rho,accepted,min_eig\n";
  for (const auto& r : trace) {
    out << r.t << "," << r.env_steps << "," << r.mean_return << "," << r.grad_norm_estimate
        << "," << r.exact_grad_norm << "," << r.lambda << "," << r.rho << ","
        << (r.accepted ? 1 : 0) << "," << r.min_subspace_eig << "\n";
  }
}

std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty trace");
  std::vector<TraceRecord> trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) throw std::runtime_error(path + ": malformed trace row");
    TraceRecord r;
    r.t = std::stol(fields[0]);
    r.env_steps = std::stol(fields[1]);
    r.mean_return = std::stod(fields[2]);
    r.grad_norm_estimate = std::stod(fields[3]);
    r.exact_grad_norm = std::stod(fields[4]);
    r.lambda = std::stod(fields[5]);
    r.rho = std::stod(fields[6]);
    r.accepted = fields[7] == "1";
    r.min_subspace_eig = std::stod(fields[8]);
    trace.push_back(r);
  }
  return trace;
}

}  // namespace sopo

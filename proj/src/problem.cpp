#include "sopo/problem.hpp"

#include <cmath>
#include <limits>

namespace sopo {

namespace {

class BatchHvpOperator : public HvpOperator {
 public:
  BatchHvpOperator(const SoftmaxPolicy& policy, HvpBatch batch, double gamma, int horizon)
      : policy_(policy), batch_(std::move(batch)), gamma_(gamma), horizon_(horizon) {
    double sum = 0.0;
    for (const auto& traj : batch_.trajectories) sum += truncated_return(traj, gamma_);
    mean_return_ = sum / static_cast<double>(batch_.trajectories.size());
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override {
    return hessian_vector(policy_, batch_, v, gamma_);
  }
  double mean_return() const override { return mean_return_; }
  long env_steps() const override {
    return static_cast<long>(batch_.trajectories.size()) * horizon_;
  }

 private:
  const SoftmaxPolicy& policy_;
  HvpBatch batch_;
  double gamma_;
  int horizon_;
  double mean_return_ = 0.0;
};

class ClosureHvpOperator : public HvpOperator {
 public:
  ClosureHvpOperator(HvpFn fn) : fn_(std::move(fn)) {}
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override { return fn_(v); }
  double mean_return() const override { return std::numeric_limits<double>::quiet_NaN(); }
  long env_steps() const override { return 1; }

 private:
  HvpFn fn_;
};

}  // namespace

MdpProblem::MdpProblem(TabularMDP mdp, SoftmaxPolicy policy, int horizon, MdpProblemOptions opts)
    : mdp_(std::move(mdp)),
      policy_(std::move(policy)),
      horizon_(horizon),
      opts_(opts),
      features_(one_hot_features(mdp_.n_states)) {
  mdp_.validate();
  if (horizon_ < 1) throw std::invalid_argument("MdpProblem: horizon must be >= 1");
}

Eigen::Index MdpProblem::dim() const { return policy_.param_dim(); }

GradEstimate MdpProblem::sample_gradient(const Eigen::VectorXd& theta, long n, Rng& rng,
                                         long& env_steps) {
  if (n < 1) throw std::invalid_argument("sample_gradient: empty batch");
  std::vector<Trajectory> batch;
  batch.reserve(n);
  for (long i = 0; i < n; ++i) {
    Rng sub = rng.spawn();
    batch.push_back(sample_trajectory(mdp_, policy_, theta, horizon_, sub));
  }
  env_steps += n * horizon_;

  LinearBaseline baseline;
  if (opts_.use_baseline)
    baseline = fit_linear_baseline(batch, mdp_.gamma, features_, mdp_.n_states);

  GradEstimate est;
  est.g = Eigen::VectorXd::Zero(dim());
  est.n_trajectories = n;
  double return_sum = 0.0;
  for (const auto& traj : batch) {
    const Eigen::VectorXd gi =
        pgt_gradient(policy_, traj, theta, mdp_.gamma,
                     opts_.use_baseline ? &baseline : nullptr, &features_);
    est.g += gi;
    est.sum_sq_norm += gi.squaredNorm();
    return_sum += truncated_return(traj, mdp_.gamma);
  }
  est.g /= static_cast<double>(n);
  est.mean_return = return_sum / static_cast<double>(n);
  return est;
}

std::shared_ptr<HvpOperator> MdpProblem::sample_hessian(const Eigen::VectorXd& theta, long n,
                                                        Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_hessian: empty batch");
  HvpBatch batch;
  batch.theta = theta;
  batch.mu = opts_.mu;
  batch.variant = opts_.variant;
  batch.trajectories.reserve(n);
  for (long i = 0; i < n; ++i) {
    Rng sub = rng.spawn();
    batch.trajectories.push_back(sample_trajectory(mdp_, policy_, theta, horizon_, sub));
  }
  return std::make_shared<BatchHvpOperator>(policy_, std::move(batch), mdp_.gamma, horizon_);
}

Eigen::VectorXd MdpProblem::sample_gradient_diff(const Eigen::VectorXd& theta_prev,
                                                 const Eigen::VectorXd& theta_curr, long m,
                                                 Rng& rng, long& env_steps) {
  return havr_correction(policy_, mdp_, theta_prev, theta_curr, horizon_, mdp_.gamma, m, rng,
                         &env_steps, opts_.mu, opts_.variant);
}

double MdpProblem::sample_value(const Eigen::VectorXd& theta, long n, Rng& rng,
                                long& env_steps) {
  if (n < 1) throw std::invalid_argument("sample_value: empty batch");
  double sum = 0.0;
  for (long i = 0; i < n; ++i) {
    Rng sub = rng.spawn();
    sum += truncated_return(sample_trajectory(mdp_, policy_, theta, horizon_, sub), mdp_.gamma);
  }
  env_steps += n * horizon_;
  return sum / static_cast<double>(n);
}

bool MdpProblem::has_exact() const {
  return opts_.exact_oracles &&
         static_cast<long>(mdp_.n_states) * mdp_.n_actions <= 10'000;
}

double MdpProblem::exact_value(const Eigen::VectorXd& theta) const {
  return exact_objective(mdp_, policy_, theta, horizon_);
}

Eigen::VectorXd MdpProblem::exact_gradient(const Eigen::VectorXd& theta) const {
  return exact_gradient_dp(mdp_, policy_, theta, horizon_);
}

GradEstimate DeterministicProblem::sample_gradient(const Eigen::VectorXd& theta, long, Rng&,
                                                   long& env_steps) {
  GradEstimate est;
  est.g = grad_(theta);
  est.n_trajectories = 1;
  est.sum_sq_norm = est.g.squaredNorm();
  est.mean_return = value_(theta);  // the raw objective; traces negate it
  env_steps += 1;
  return est;
}

std::shared_ptr<HvpOperator> DeterministicProblem::sample_hessian(const Eigen::VectorXd& theta,
                                                                  long, Rng&) {
  auto hvp = hvp_;
  const Eigen::VectorXd at = theta;
  return std::make_shared<ClosureHvpOperator>(
      [hvp, at](const Eigen::VectorXd& v) { return hvp(at, v); });
}

Eigen::VectorXd DeterministicProblem::sample_gradient_diff(const Eigen::VectorXd& theta_prev,
                                                           const Eigen::VectorXd& theta_curr,
                                                           long, Rng&, long& env_steps) {
  env_steps += 1;
  return grad_(theta_curr) - grad_(theta_prev);
}

double DeterministicProblem::sample_value(const Eigen::VectorXd& theta, long, Rng&,
                                          long& env_steps) {
  env_steps += 1;
  return value_(theta);
}

std::unique_ptr<DeterministicProblem> exact_mdp_problem(const TabularMDP& mdp,
                                                        const SoftmaxPolicy& policy,
                                                        int horizon) {
  auto value = [mdp, policy, horizon](const Eigen::VectorXd& theta) {
    return exact_objective(mdp, policy, theta, horizon);
  };
  auto grad = [mdp, policy, horizon](const Eigen::VectorXd& theta) {
    return exact_gradient_dp(mdp, policy, theta, horizon);
  };
  auto hvp = [mdp, policy, horizon](const Eigen::VectorXd& theta, const Eigen::VectorXd& v) {
    const double h = 1e-5;
    const double vn = v.norm();
    if (vn == 0.0) return Eigen::VectorXd(Eigen::VectorXd::Zero(theta.size()));
    const Eigen::VectorXd dir = v / vn;
    return (vn / (2.0 * h) *
            (exact_gradient_dp(mdp, policy, theta + h * dir, horizon) -
             exact_gradient_dp(mdp, policy, theta - h * dir, horizon)))
        .eval();
  };
  return std::make_unique<DeterministicProblem>(policy.param_dim(), std::move(value),
                                                std::move(grad), std::move(hvp));
}

}  // namespace sopo

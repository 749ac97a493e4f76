#include "sopo/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace sopo {

FeatureMap one_hot_features(int n_states) {
  return [n_states](int s) {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n_states);
    phi(s) = 1.0;
    return phi;
  };
}

namespace {

// Psi_h = sum_{i >= h} gamma^i r_i, computed right to left.
std::vector<double> reward_to_go(const Trajectory& traj, double gamma) {
  const int h = traj.horizon();
  std::vector<double> psi(h);
  double tail = 0.0;
  for (int i = h - 1; i >= 0; --i) {
    tail = std::pow(gamma, i) * traj.rewards[i] + tail;
    psi[i] = tail;
  }
  return psi;
}

}  // namespace

Eigen::VectorXd score_sum(const SoftmaxPolicy& policy, const Trajectory& traj,
                          const Eigen::VectorXd& theta) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(theta.size());
  for (int h = 0; h < traj.horizon(); ++h)
    policy.add_score(theta, traj.states[h], traj.actions[h], 1.0, s);
  return s;
}

Eigen::VectorXd pgt_gradient(const SoftmaxPolicy& policy, const Trajectory& traj,
                             const Eigen::VectorXd& theta, double gamma,
                             const LinearBaseline* baseline, const FeatureMap* features) {
  const auto psi = reward_to_go(traj, gamma);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  for (int h = 0; h < traj.horizon(); ++h) {
    double w = psi[h];
    if (baseline && baseline->fitted && features) w -= baseline->value((*features)(traj.states[h]));
    policy.add_score(theta, traj.states[h], traj.actions[h], w, g);
  }
  return g;
}

Eigen::VectorXd gpomdp_gradient(const SoftmaxPolicy& policy, const Trajectory& traj,
                                const Eigen::VectorXd& theta, double gamma) {
  Eigen::VectorXd running = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  double disc = 1.0;
  for (int h = 0; h < traj.horizon(); ++h) {
    policy.add_score(theta, traj.states[h], traj.actions[h], 1.0, running);
    g += (disc * traj.rewards[h]) * running;
    disc *= gamma;
  }
  return g;
}

namespace {

// H(theta; tau) . v for a single trajectory, either estimator variant.
void add_single_hvp(const SoftmaxPolicy& policy, const Trajectory& traj,
                    const Eigen::VectorXd& theta, const Eigen::VectorXd& v, double gamma,
                    double mu, HessVariant variant, Eigen::VectorXd& acc) {
  const auto psi = reward_to_go(traj, gamma);
  // grad g(theta; tau) . v = sum_h Psi_h hessian(log pi_h) v  (both variants)
  for (int h = 0; h < traj.horizon(); ++h)
    policy.add_score_hvp(theta, traj.states[h], traj.actions[h], v, psi[h], acc);

  if (variant == HessVariant::standard) {
    // mu * (grad log p . v) g(theta; tau)
    const Eigen::VectorXd sum_scores = score_sum(policy, traj, theta);
    const Eigen::VectorXd g = pgt_gradient(policy, traj, theta, gamma);
    acc += mu * sum_scores.dot(v) * g;
  } else {
    // sum_h gamma^h r_h (u_h . v) u_h with u_h the running score sum
    Eigen::VectorXd u = Eigen::VectorXd::Zero(theta.size());
    double disc = 1.0;
    for (int h = 0; h < traj.horizon(); ++h) {
      policy.add_score(theta, traj.states[h], traj.actions[h], 1.0, u);
      acc += (disc * traj.rewards[h] * u.dot(v)) * u;
      disc *= gamma;
    }
  }
}

}  // namespace

Eigen::VectorXd hessian_vector(const SoftmaxPolicy& policy, const HvpBatch& batch,
                               const Eigen::VectorXd& v, double gamma) {
  if (batch.trajectories.empty()) throw std::invalid_argument("hessian_vector: empty batch");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(batch.theta.size());
  for (const auto& traj : batch.trajectories)
    add_single_hvp(policy, traj, batch.theta, v, gamma, batch.mu, batch.variant, acc);
  return acc / static_cast<double>(batch.trajectories.size());
}

Eigen::VectorXd havr_correction(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                                const Eigen::VectorXd& theta_prev,
                                const Eigen::VectorXd& theta_curr, int horizon, double gamma,
                                long m, Rng& rng, long* env_steps, double mu,
                                HessVariant variant) {
  if (m < 1) throw std::invalid_argument("havr_correction: need at least one sample");
  const Eigen::VectorXd v = theta_curr - theta_prev;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(theta_curr.size());
  if (v.norm() == 0.0) return acc;  // no movement, every sample is zero
  for (long i = 0; i < m; ++i) {
    Rng sub = rng.spawn();
    const double a = sub.uniform();
    const Eigen::VectorXd theta_a = a * theta_curr + (1.0 - a) * theta_prev;
    const Trajectory traj = sample_trajectory(mdp, policy, theta_a, horizon, sub);
    add_single_hvp(policy, traj, theta_a, v, gamma, mu, variant, acc);
    if (env_steps) *env_steps += horizon;
  }
  return acc / static_cast<double>(m);
}

LinearBaseline fit_linear_baseline(const std::vector<Trajectory>& trajectories, double gamma,
                                   const FeatureMap& features, int n_features) {
  if (trajectories.empty()) throw std::invalid_argument("fit_linear_baseline: no trajectories");
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n_features, n_features);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_features);
  for (const auto& traj : trajectories) {
    const auto psi = reward_to_go(traj, gamma);
    for (int h = 0; h < traj.horizon(); ++h) {
      const Eigen::VectorXd phi = features(traj.states[h]);
      gram.noalias() += phi * phi.transpose();
      rhs += psi[h] * phi;
    }
  }
  LinearBaseline b;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  const Eigen::VectorXd pivots = solver.vectorD();
  const bool singular = solver.info() != Eigen::Success ||
                        pivots.minCoeff() <= 1e-12 * std::max(1.0, pivots.maxCoeff());
  if (singular) {
    gram.diagonal().array() += 1e-8;
    solver.compute(gram);
    b.ridged = true;
  }
  b.weights = solver.solve(rhs);
  b.fitted = true;
  return b;
}

double TheoryConstants::grad_moment_bound() const {
  return score_bound * reward_bound / std::pow(1.0 - gamma, 1.5);
}

double TheoryConstants::hess_moment_bound() const {
  const double om = 1.0 - gamma;
  const double h2 = static_cast<double>(horizon) * horizon;
  const double g2 = score_bound * score_bound;
  return std::sqrt(h2 * h2 * g2 * g2 * reward_bound * reward_bound / (om * om) +
                   hessian_bound * hessian_bound * reward_bound * reward_bound /
                       (om * om * om * om));
}

TheoryConstants softmax_constants(const TabularMDP& mdp, int horizon, double hess_lipschitz,
                                  double subspace_c) {
  TheoryConstants c;
  c.reward_bound = mdp.reward_bound;
  c.score_bound = std::sqrt(2.0);
  c.hessian_bound = 0.5;
  c.gamma = mdp.gamma;
  c.horizon = horizon;
  c.hess_lipschitz = hess_lipschitz;
  c.subspace_c = subspace_c;
  return c;
}

double optimal_mu(const TheoryConstants& constants) {
  const double g2 = constants.score_bound * constants.score_bound;
  const double h2 = static_cast<double>(constants.horizon) * constants.horizon;
  const double raw =
      1.0 - std::sqrt(2.0) * constants.hessian_bound / ((1.0 - constants.gamma) * g2 * h2);
  return std::clamp(raw, 0.0, 1.0);
}

VarianceReport variance_report(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                               const Eigen::VectorXd& theta, int horizon, EstimatorKind kind,
                               const TheoryConstants& constants) {
  VarianceReport rep;
  if (kind == EstimatorKind::gradient) {
    const Eigen::VectorXd mean = exact_gradient_dp(mdp, policy, theta, horizon);
    long double second = 0.0L;
    for_each_trajectory(mdp, policy, theta, horizon, [&](const Trajectory& traj, double prob) {
      const Eigen::VectorXd g = pgt_gradient(policy, traj, theta, mdp.gamma);
      second += static_cast<long double>(prob) * (g - mean).squaredNorm();
    });
    rep.second_moment = static_cast<double>(second);
    const double gg = constants.grad_moment_bound();
    rep.bound = gg * gg;
    return rep;
  }

  // Hessian kinds: Frobenius second moment about the exact Hessian.
  const Eigen::MatrixXd mean = exact_hessian_fd(mdp, policy, theta, horizon);
  const HessVariant variant =
      kind == EstimatorKind::hessian_standard ? HessVariant::standard : HessVariant::vr_uut;
  const Eigen::Index d = theta.size();
  long double second = 0.0L;
  for_each_trajectory(mdp, policy, theta, horizon, [&](const Trajectory& traj, double prob) {
    HvpBatch one;
    one.trajectories = {traj};
    one.theta = theta;
    one.mu = 1.0;
    one.variant = variant;
    Eigen::MatrixXd h(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      h.col(j) = hessian_vector(policy, one, Eigen::VectorXd::Unit(d, j), mdp.gamma);
    second += static_cast<long double>(prob) * (h - mean).squaredNorm();
  });
  rep.second_moment = static_cast<double>(second);
  const double gh = constants.hess_moment_bound();
  rep.bound = gh * gh;
  return rep;
}

}  // namespace sopo

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "sopo/mdp.hpp"
#include "sopo/policy.hpp"
#include "sopo/rng.hpp"

namespace sopo {

// Batch-averaged trajectory gradient with bookkeeping for variance
// diagnostics and trace output.
struct GradEstimate {
  Eigen::VectorXd g;
  long n_trajectories = 0;
  double sum_sq_norm = 0.0;  // sum of ||g(theta; tau)||^2 over the batch
  double mean_return = 0.0;  // mean truncated return of the batch
};

// State-feature least-squares fit of the discounted return-to-go,
// b(s) = weights . features(s).
struct LinearBaseline {
  Eigen::VectorXd weights;
  bool fitted = false;
  bool ridged = false;  // Gram matrix was singular; ridge 1e-8 applied

  double value(const Eigen::VectorXd& features) const {
    return fitted ? weights.dot(features) : 0.0;
  }
};

using FeatureMap = std::function<Eigen::VectorXd(int state)>;

FeatureMap one_hot_features(int n_states);

enum class HessVariant {
  standard,  // grad g + mu * g grad-log-p^T  (unbiased at mu = 1)
  vr_uut,    // grad g + sum_h gamma^h r_h u_h u_h^T  (unbiased, horizon-free variance)
};

// A frozen minibatch defining one stochastic Hessian action H(theta; M) . v.
struct HvpBatch {
  std::vector<Trajectory> trajectories;
  Eigen::VectorXd theta;  // parameters the batch was sampled at
  double mu = 1.0;
  HessVariant variant = HessVariant::standard;
};

// Single-trajectory policy-gradient estimator with reward-to-go weights
// Psi_h = sum_{i >= h} gamma^i r_i - b(s_h).
Eigen::VectorXd pgt_gradient(const SoftmaxPolicy& policy, const Trajectory& traj,
                             const Eigen::VectorXd& theta, double gamma,
                             const LinearBaseline* baseline = nullptr,
                             const FeatureMap* features = nullptr);

// Same estimator in its other summation order:
// sum_h (sum_{t <= h} score_t) gamma^h r_h. Identical output pathwise.
Eigen::VectorXd gpomdp_gradient(const SoftmaxPolicy& policy, const Trajectory& traj,
                                const Eigen::VectorXd& theta, double gamma);

// Batch-mean Hessian action on v.
Eigen::VectorXd hessian_vector(const SoftmaxPolicy& policy, const HvpBatch& batch,
                               const Eigen::VectorXd& v, double gamma);

// Unbiased estimate of grad J(theta_curr) - grad J(theta_prev): m draws of
// (a, tau) with a ~ U[0,1] and tau rolled at theta(a), each applying the
// Hessian estimator at theta(a) to v = theta_curr - theta_prev. env_steps,
// when given, accrues horizon * (trajectories actually sampled). mu = 1
// keeps the contract unbiased; benchmark configs may pass a biased value.
Eigen::VectorXd havr_correction(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                                const Eigen::VectorXd& theta_prev,
                                const Eigen::VectorXd& theta_curr, int horizon, double gamma,
                                long m, Rng& rng, long* env_steps = nullptr, double mu = 1.0,
                                HessVariant variant = HessVariant::standard);

LinearBaseline fit_linear_baseline(const std::vector<Trajectory>& trajectories, double gamma,
                                   const FeatureMap& features, int n_features);

// Constants of the analysis; derived quantities are computed on demand.
struct TheoryConstants {
  double reward_bound = 1.0;   // R
  double score_bound = 1.0;    // G
  double hessian_bound = 1.0;  // L
  double gamma = 0.9;
  int horizon = 1;             // H
  double hess_lipschitz = 1.0; // M
  double subspace_c = 0.0;     // C

  double c_tilde() const { return subspace_c + 1.0 / 24.0; }
  // G_g = G R / (1 - gamma)^{3/2}
  double grad_moment_bound() const;
  // G_H = sqrt(H^4 G^4 R^2 / (1-gamma)^2 + L^2 R^2 / (1-gamma)^4)
  double hess_moment_bound() const;
  TruncationBounds truncation() const {
    return truncation_bounds(reward_bound, gamma, horizon, score_bound, hessian_bound);
  }
};

TheoryConstants softmax_constants(const TabularMDP& mdp, int horizon, double hess_lipschitz = 1.0,
                                  double subspace_c = 0.0);

// mu minimizing the biased-estimator MSE bound, clamped to [0, 1].
double optimal_mu(const TheoryConstants& constants);

enum class EstimatorKind { gradient, hessian_standard, hessian_vr };

// Enumeration-exact second moment E||estimate - truth||^2 (Frobenius for the
// Hessian kinds) next to its analysis bound. Throws TooLarge when the
// instance cannot be enumerated.
struct VarianceReport {
  double second_moment = 0.0;
  double bound = 0.0;
  bool within_bound() const { return second_moment <= bound; }
};
VarianceReport variance_report(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                               const Eigen::VectorXd& theta, int horizon, EstimatorKind kind,
                               const TheoryConstants& constants);

// Sum of per-step scores, i.e. grad log p(tau; theta) (transition terms vanish).
Eigen::VectorXd score_sum(const SoftmaxPolicy& policy, const Trajectory& traj,
                          const Eigen::VectorXd& theta);

}  // namespace sopo

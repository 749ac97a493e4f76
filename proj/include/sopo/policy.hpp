#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>

#include "sopo/rng.hpp"

namespace sopo {

struct Unsupported : std::runtime_error {
  explicit Unsupported(const std::string& what) : std::runtime_error(what) {}
};

// Bounds on the score and its Hessian: ||score|| <= G pointwise and
// ||hessian of log pi|| <= L in spectral norm.
struct PolicyConstants {
  double score_bound = 0.0;    // G
  double hessian_bound = 0.0;  // L
};

// Tabular softmax policy. Parameters are laid out row-major per state:
// theta[s * n_actions + a] is the logit of action a in state s.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(int n_states, int n_actions)
      : n_states_(n_states), n_actions_(n_actions) {
    if (n_states < 1 || n_actions < 1)
      throw std::invalid_argument("SoftmaxPolicy: empty state or action space");
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int param_dim() const { return n_states_ * n_actions_; }

  Eigen::VectorXd action_probs(const Eigen::VectorXd& theta, int state) const;
  double log_prob(const Eigen::VectorXd& theta, int state, int action) const;
  int sample_action(const Eigen::VectorXd& theta, int state, Rng& rng) const;

  // grad_theta log pi(a|s): the state block is e_a - pi(.|s), all else zero.
  Eigen::VectorXd score(const Eigen::VectorXd& theta, int state, int action) const;

  // hessian(log pi(a|s)) * v: the state block is -(diag(pi) - pi pi^T) v_s.
  Eigen::VectorXd score_hvp(const Eigen::VectorXd& theta, int state, int action,
                            const Eigen::VectorXd& v) const;

  // acc += weight * score(theta, s, a); avoids temporaries in estimator loops.
  void add_score(const Eigen::VectorXd& theta, int state, int action, double weight,
                 Eigen::VectorXd& acc) const;
  void add_score_hvp(const Eigen::VectorXd& theta, int state, int action,
                     const Eigen::VectorXd& v, double weight, Eigen::VectorXd& acc) const;

  // Dense d x d Hessian of log pi(a|s); oracle/test use only.
  Eigen::MatrixXd score_hessian_dense(const Eigen::VectorXd& theta, int state, int action) const;

 private:
  int n_states_;
  int n_actions_;
};

// G = sqrt(2) and L = 1/2 hold for any tabular softmax policy.
PolicyConstants policy_constants(const SoftmaxPolicy& policy);

// Gaussian policy with linear state-feature mean and per-dimension log
// standard deviations. Layout: mean weights W (action_dim x n_features)
// row-major by action dimension, then the action_dim log-stds, so
// d = n_features * action_dim + action_dim.
class LinearGaussianPolicy {
 public:
  using FeatureMap = std::function<Eigen::VectorXd(int state)>;

  // One-hot state features.
  LinearGaussianPolicy(int n_states, int action_dim);
  LinearGaussianPolicy(FeatureMap features, int n_features, int action_dim);

  int n_features() const { return n_features_; }
  int action_dim() const { return action_dim_; }
  int param_dim() const { return n_features_ * action_dim_ + action_dim_; }

  Eigen::VectorXd mean(const Eigen::VectorXd& theta, int state) const;
  Eigen::VectorXd stddev(const Eigen::VectorXd& theta) const;

  double log_prob(const Eigen::VectorXd& theta, int state, const Eigen::VectorXd& action) const;
  Eigen::VectorXd sample_action(const Eigen::VectorXd& theta, int state, Rng& rng) const;
  Eigen::VectorXd score(const Eigen::VectorXd& theta, int state,
                        const Eigen::VectorXd& action) const;
  Eigen::VectorXd score_hvp(const Eigen::VectorXd& theta, int state, const Eigen::VectorXd& action,
                            const Eigen::VectorXd& v) const;

 private:
  FeatureMap features_;
  int n_features_;
  int action_dim_;
};

// The Gaussian score is unbounded, so no closed-form constants exist.
PolicyConstants policy_constants(const LinearGaussianPolicy& policy);

// Flat parameter file with a one-line "kind d" header.
void save_params(const std::string& path, const std::string& kind, const Eigen::VectorXd& theta);
std::pair<std::string, Eigen::VectorXd> load_params(const std::string& path);

}  // namespace sopo

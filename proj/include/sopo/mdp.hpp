#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sopo/rng.hpp"

namespace sopo {

class SoftmaxPolicy;

struct TooLarge : std::runtime_error {
  explicit TooLarge(const std::string& what) : std::runtime_error(what) {}
};

// Finite MDP with bounded per-step cost. The objective everywhere in this
// codebase is the expected discounted sum of `reward`, *minimized*; traces
// and the CLI report its negation as the episode return.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> transition;  // transition[s](a, s') row-stochastic per (s, a)
  Eigen::MatrixXd reward;                   // reward(s, a), |reward| <= reward_bound
  Eigen::VectorXd initial_dist;
  double gamma = 0.9;
  double reward_bound = 1.0;

  // Throws std::runtime_error naming the violated invariant.
  void validate() const;
};

struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;

  int horizon() const { return static_cast<int>(states.size()); }
};

// Seeded generator: symmetric Dirichlet(1) transition rows and initial
// distribution, rewards uniform on [-reward_bound, reward_bound].
TabularMDP random_mdp(std::uint64_t seed, int n_states, int n_actions,
                      double reward_bound = 1.0, double gamma = 0.9);

// Flat text fixture: header "S A H gamma R", then "P s a p0 ... pS-1" rows,
// "r s r0 ... rA-1" rows, and a final "rho p0 ... pS-1" row.
struct MdpFixture {
  TabularMDP mdp;
  int horizon = 1;
};
void save_mdp(const std::string& path, const TabularMDP& mdp, int horizon);
MdpFixture load_mdp(const std::string& path);

Trajectory sample_trajectory(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                             const Eigen::VectorXd& theta, int horizon, Rng& rng);

// sum_h gamma^h r_h over the trajectory.
double truncated_return(const Trajectory& traj, double gamma);

// Forward state marginals mu_h(s) for h = 0..horizon-1.
std::vector<Eigen::VectorXd> state_marginals(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                             const Eigen::VectorXd& theta, int horizon);

// J(theta) by forward dynamic programming. Throws TooLarge when
// n_states * n_actions exceeds the DP budget.
double exact_objective(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                       const Eigen::VectorXd& theta, int horizon);

// grad J by central differences of exact_objective (step 1e-5).
Eigen::VectorXd exact_gradient_fd(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                  const Eigen::VectorXd& theta, int horizon);

// grad J by differentiating the forward DP recursion (exact to roundoff).
Eigen::VectorXd exact_gradient_dp(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                  const Eigen::VectorXd& theta, int horizon);

// Hessian of J by central differences of exact_gradient_dp (step 1e-5).
// Throws TooLarge when the parameter dimension exceeds 200.
Eigen::MatrixXd exact_hessian_fd(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                 const Eigen::VectorXd& theta, int horizon);

// Visits every length-`horizon` trajectory together with its exact
// probability. Throws TooLarge when the trajectory count exceeds `max_paths`.
void for_each_trajectory(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                         const Eigen::VectorXd& theta, int horizon,
                         const std::function<void(const Trajectory&, double)>& visit,
                         long max_paths = 2'000'000);

long count_trajectories(const TabularMDP& mdp, int horizon);

// Horizon-truncation gaps for the infinite-horizon objective: the returned
// bounds already include the gamma^H factor.
struct TruncationBounds {
  double value_bound = 0.0;
  double grad_bound = 0.0;
  double hess_bound = 0.0;
};
TruncationBounds truncation_bounds(double reward_bound, double gamma, int horizon,
                                   double score_bound, double hessian_bound);

}  // namespace sopo

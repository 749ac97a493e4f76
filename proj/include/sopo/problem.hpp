#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>

#include "sopo/estimators.hpp"
#include "sopo/mdp.hpp"
#include "sopo/policy.hpp"
#include "sopo/rng.hpp"
#include "sopo/trust_region.hpp"

namespace sopo {

// A frozen stochastic Hessian action: deterministic for its lifetime, so a
// trust-region solve sees one fixed quadratic model.
class HvpOperator {
 public:
  virtual ~HvpOperator() = default;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& v) const = 0;
  virtual double mean_return() const = 0;  // mean batch return, NaN when not sample-based
  virtual long env_steps() const = 0;

  HvpFn as_fn() const {
    return [this](const Eigen::VectorXd& v) { return apply(v); };
  }
};

// What an optimizer needs from the world: batched gradient and Hessian-action
// estimates, gradient-difference estimates for the variance-reduced
// recursion, and value estimates for the acceptance ratio. Implementations
// decide whether those come from rollouts or from exact closures.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual Eigen::Index dim() const = 0;
  virtual GradEstimate sample_gradient(const Eigen::VectorXd& theta, long n, Rng& rng,
                                       long& env_steps) = 0;
  virtual std::shared_ptr<HvpOperator> sample_hessian(const Eigen::VectorXd& theta, long n,
                                                      Rng& rng) = 0;
  virtual Eigen::VectorXd sample_gradient_diff(const Eigen::VectorXd& theta_prev,
                                               const Eigen::VectorXd& theta_curr, long m, Rng& rng,
                                               long& env_steps) = 0;
  // Estimate of the objective (the minimized cost) at theta.
  virtual double sample_value(const Eigen::VectorXd& theta, long n, Rng& rng,
                              long& env_steps) = 0;

  // Exact oracles, available on DP-sized instances and synthetic problems.
  virtual bool has_exact() const { return false; }
  virtual double exact_value(const Eigen::VectorXd&) const {
    throw std::logic_error("no exact value oracle");
  }
  virtual Eigen::VectorXd exact_gradient(const Eigen::VectorXd&) const {
    throw std::logic_error("no exact gradient oracle");
  }
};

struct MdpProblemOptions {
  double mu = 1.0;
  HessVariant variant = HessVariant::standard;
  bool use_baseline = false;
  bool exact_oracles = true;  // expose DP value/gradient when the MDP fits the budget
};

// Rollout-backed problem. Each trajectory costs `horizon` env steps; every
// batch element draws from its own spawned RNG stream.
class MdpProblem : public Problem {
 public:
  MdpProblem(TabularMDP mdp, SoftmaxPolicy policy, int horizon, MdpProblemOptions opts = {});

  Eigen::Index dim() const override;
  GradEstimate sample_gradient(const Eigen::VectorXd& theta, long n, Rng& rng,
                               long& env_steps) override;
  std::shared_ptr<HvpOperator> sample_hessian(const Eigen::VectorXd& theta, long n,
                                              Rng& rng) override;
  Eigen::VectorXd sample_gradient_diff(const Eigen::VectorXd& theta_prev,
                                       const Eigen::VectorXd& theta_curr, long m, Rng& rng,
                                       long& env_steps) override;
  double sample_value(const Eigen::VectorXd& theta, long n, Rng& rng, long& env_steps) override;

  bool has_exact() const override;
  double exact_value(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd exact_gradient(const Eigen::VectorXd& theta) const override;

  const TabularMDP& mdp() const { return mdp_; }
  const SoftmaxPolicy& policy() const { return policy_; }
  int horizon() const { return horizon_; }

 private:
  TabularMDP mdp_;
  SoftmaxPolicy policy_;
  int horizon_;
  MdpProblemOptions opts_;
  FeatureMap features_;
};

// Deterministic problem from exact closures; batch sizes are ignored and
// each query counts one env step so traces stay monotone.
class DeterministicProblem : public Problem {
 public:
  using ValueFn = std::function<double(const Eigen::VectorXd&)>;
  using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using HvpAtFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& theta,
                                                const Eigen::VectorXd& v)>;

  DeterministicProblem(Eigen::Index dim, ValueFn value, GradFn grad, HvpAtFn hvp)
      : dim_(dim), value_(std::move(value)), grad_(std::move(grad)), hvp_(std::move(hvp)) {}

  Eigen::Index dim() const override { return dim_; }
  GradEstimate sample_gradient(const Eigen::VectorXd& theta, long n, Rng& rng,
                               long& env_steps) override;
  std::shared_ptr<HvpOperator> sample_hessian(const Eigen::VectorXd& theta, long n,
                                              Rng& rng) override;
  Eigen::VectorXd sample_gradient_diff(const Eigen::VectorXd& theta_prev,
                                       const Eigen::VectorXd& theta_curr, long m, Rng& rng,
                                       long& env_steps) override;
  double sample_value(const Eigen::VectorXd& theta, long n, Rng& rng, long& env_steps) override;

  bool has_exact() const override { return true; }
  double exact_value(const Eigen::VectorXd& theta) const override { return value_(theta); }
  Eigen::VectorXd exact_gradient(const Eigen::VectorXd& theta) const override {
    return grad_(theta);
  }

 private:
  Eigen::Index dim_;
  ValueFn value_;
  GradFn grad_;
  HvpAtFn hvp_;
};

// DP-exact MDP problem: gradients, values and gradient differences come from
// the dynamic-programming oracles, Hessian actions from directional finite
// differences of the DP gradient. Replaces sampling in degeneracy tests.
std::unique_ptr<DeterministicProblem> exact_mdp_problem(const TabularMDP& mdp,
                                                        const SoftmaxPolicy& policy, int horizon);

}  // namespace sopo

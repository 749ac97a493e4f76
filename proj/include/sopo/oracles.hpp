#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "sopo/estimators.hpp"
#include "sopo/mdp.hpp"
#include "sopo/policy.hpp"
#include "sopo/trust_region.hpp"

// Reference implementations that never share a code path with the solvers
// and estimators they check: dense grid search for the reduced trust-region
// problem, eigendecomposition plus bisection for the full problem, exact
// trajectory enumeration for estimator moments, and Gauss-Legendre
// quadrature for the path-integral identity.
namespace sopo::oracle {

// Minimum model value over the feasible ellipse, scanned on an
// n_angles x n_radii polar grid in whitened coordinates, plus a sweep along
// the most negative curvature eigenvector for hard-case instances.
double drtr_grid_minimum(const TwoDimModel& model, int n_angles = 4000, int n_radii = 200);

struct DenseTrSolution {
  Eigen::VectorXd d;
  double value = 0.0;   // g^T d + 1/2 d^T H d
  double lambda = 0.0;
};
// Exact trust-region solution for a dense symmetric H via eigendecomposition
// and bisection on the secular equation.
DenseTrSolution dense_tr_solve(const Eigen::MatrixXd& hess, const Eigen::VectorXd& g,
                               double delta);

// Nodes and weights on [0, 1].
std::vector<std::pair<double, double>> gauss_legendre_01(int n);

// Enumeration-exact estimator means over all trajectories.
Eigen::VectorXd mean_gradient(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                              const Eigen::VectorXd& theta, int horizon,
                              const LinearBaseline* baseline = nullptr,
                              const FeatureMap* features = nullptr);
Eigen::MatrixXd mean_hessian(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                             const Eigen::VectorXd& theta, int horizon, HessVariant variant,
                             double mu = 1.0);
// E[g(theta; tau) grad-log-p(tau)^T]
Eigen::MatrixXd mean_gradient_scoresum_outer(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                                             const Eigen::VectorXd& theta, int horizon);

// Dense single-trajectory Hessian estimate assembled from the policy
// derivative primitives (not from hessian_vector).
Eigen::MatrixXd dense_single_hessian(const SoftmaxPolicy& policy, const Trajectory& traj,
                                     const Eigen::VectorXd& theta, double gamma, double mu,
                                     HessVariant variant);

// Quadrature value of int_0^1 E_tau[H(theta(a); tau)] v da, the exact mean
// of the Hessian-aided correction.
Eigen::VectorXd havr_quadrature_mean(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                                     const Eigen::VectorXd& theta_prev,
                                     const Eigen::VectorXd& theta_curr, int horizon,
                                     int quadrature_nodes = 32);

struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double tolerance = 0.0;
  std::string note;
};

std::vector<CheckResult> solver_checks(std::uint64_t seed);
std::vector<CheckResult> estimator_checks(std::uint64_t seed);

}  // namespace sopo::oracle

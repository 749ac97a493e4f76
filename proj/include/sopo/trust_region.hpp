#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

namespace sopo {

using HvpFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Reduced quadratic model over step coefficients alpha in span{-g, d}:
//   m(alpha) = c^T alpha + 1/2 alpha^T Q alpha,  subject to  ||alpha||_G <= delta.
// Q is the reduced curvature, c the reduced gradient, G the step metric
// (||alpha||_G equals the Euclidean norm of the lifted step).
struct TwoDimModel {
  Eigen::Matrix2d Q;
  Eigen::Vector2d c;
  Eigen::Matrix2d G;
  double delta = 1.0;
};

struct TRSolution {
  Eigen::Vector2d alpha;
  double lambda = 0.0;               // KKT multiplier, >= 0
  double predicted_reduction = 0.0;  // m(0) - m(alpha), >= 0
};

enum class CgStop { converged, boundary, negative_curvature, zero_gradient, max_iter };

struct FdtrSolution {
  Eigen::VectorXd d;
  double lambda_hat = 0.0;  // multiplier estimate, diagnostic only
  bool boundary_hit = false;
  int cg_iterations = 0;
  CgStop stop = CgStop::converged;
};

// Relative residuals of the projected full-scale KKT system at a candidate
// step: stationarity ||V^T((H~ + lambda I)d + g)|| / max(1, ||g||),
// feasibility max(0, ||d|| - delta) / max(1, delta), and complementary
// slackness |lambda (delta - ||d||)| / max(1, lambda * delta).
struct SubspaceKktReport {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  double max_residual() const;
};

struct NonPsdMetric : std::runtime_error {
  explicit NonPsdMetric(const std::string& what) : std::runtime_error(what) {}
};
struct NoConvergence : std::runtime_error {
  explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};
struct IndefiniteSystem : std::runtime_error {
  explicit IndefiniteSystem(const std::string& what) : std::runtime_error(what) {}
};
struct NotInSubspace : std::runtime_error {
  explicit NotInSubspace(const std::string& what) : std::runtime_error(what) {}
};

// Global solution of the 2D generalized trust-region problem. G must be
// symmetric positive definite (degenerate spans go through solve_drtr_1d
// instead). The multiplier is located by safeguarded Newton/bisection on the
// secular equation of the (Q, G) pencil; the hard case fills the boundary
// along the most negative pencil eigenvector.
TRSolution solve_drtr(const TwoDimModel& model);

// One-dimensional restriction along -g for degenerate spans:
//   min -g_norm2 * a + 1/2 a^2 * gHg  s.t.  |a| * sqrt(g_norm2) <= delta.
// Returns alpha = (a, 0).
TRSolution solve_drtr_1d(double g_norm2, double gHg, double delta);

// Minimizer of c^T a + 1/2 a^T Q a + lambda ||a||_G^2, i.e. the solution of
// (Q + 2 lambda G) a = -c. Throws IndefiniteSystem when the regularized
// curvature has an eigenvalue <= 1e-12 (lambda too small).
Eigen::Vector2d solve_radius_free(const Eigen::Matrix2d& Q, const Eigen::Vector2d& c,
                                  const Eigen::Matrix2d& G, double lambda);

// Reduced data from two Hessian-vector products (hvp(g) and hvp(d_prev)).
// The off-diagonal of Q is symmetrized since a sampled Hessian action need
// not be symmetric.
TwoDimModel build_drtr_data(const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev,
                            const HvpFn& hvp, double delta);

// Step in parameter space: -alpha1 * g + alpha2 * d.
Eigen::VectorXd lift_direction(const Eigen::Vector2d& alpha, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& d);

// True when span{g, d_prev} collapses and the 1D fallback applies.
bool span_degenerate(const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev);

// Verifies that (d_step, lambda) satisfies the KKT system of the full-scale
// trust-region problem with the projected Hessian H~ = V V^T H V V^T, where
// V is an orthonormal basis of span{g, d_prev} and H is the symmetrized
// action of hvp (sampled Hessian estimates are not symmetric). Throws
// NotInSubspace when d_step has a component outside the span larger than
// 1e-8 * ||d_step||.
SubspaceKktReport check_subspace_kkt(const Eigen::VectorXd& d_step, double lambda,
                                     const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev,
                                     const HvpFn& hvp, double delta);

// Steihaug truncated CG for  min g^T d + 1/2 d^T H d  s.t. ||d|| <= delta,
// with H available through hvp only. Returns the interior CG solution when
// the residual drops below tol * ||g||, otherwise the point where the CG
// path first leaves the region or detects nonpositive curvature.
// max_iter < 0 means the problem dimension.
FdtrSolution solve_fdtr_steihaug(const Eigen::VectorXd& g, const HvpFn& hvp, double delta,
                                 double tol = 1e-6, int max_iter = -1);

// Smallest eigenvalue of the pencil (Q, G): the minimum curvature of the
// projected Hessian over the subspace, used as the SOSPS diagnostic.
double min_pencil_eigenvalue(const Eigen::Matrix2d& Q, const Eigen::Matrix2d& G);

}  // namespace sopo

#include "sopo/trust_region.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sopo {

namespace {

constexpr double kMetricEigTol = 1e-8;    // below this, G counts as non-PSD
constexpr double kSecularTol = 1e-12;     // tolerance on | ||alpha||_G - delta |
constexpr int kSecularMaxIter = 200;

struct Pencil {
  // G = Rt^T Rt with Rt = sqrt(diag(gevals)) * U^T; B = Rt^{-T} Q Rt^{-1}
  Eigen::Matrix2d r_inv;    // Rt^{-1}
  Eigen::Vector2d evals;    // eigenvalues of B, ascending
  Eigen::Matrix2d evecs;    // columns are eigenvectors of B
  Eigen::Vector2d c_hat;    // c transformed into the eigenbasis of B
};

Pencil factor_pencil(const Eigen::Matrix2d& Q, const Eigen::Vector2d& c,
                     const Eigen::Matrix2d& G) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> gs;
  gs.computeDirect(G);
  const double gmin = gs.eigenvalues()(0);
  const double gmax = gs.eigenvalues()(1);
  if (gmin < -kMetricEigTol)
    throw NonPsdMetric("step metric has eigenvalue " + std::to_string(gmin));
  if (gmin <= 1e-14 * std::max(1.0, gmax))
    throw std::invalid_argument("solve_drtr: singular metric, use the 1D fallback");

  const Eigen::Vector2d sqrt_g = gs.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Pencil p;
  p.r_inv = gs.eigenvectors() * sqrt_g.cwiseInverse().asDiagonal();
  Eigen::Matrix2d b = p.r_inv.transpose() * Q * p.r_inv;
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> bs;
  bs.computeDirect(b);
  p.evals = bs.eigenvalues();
  p.evecs = bs.eigenvectors();
  p.c_hat = p.evecs.transpose() * (p.r_inv.transpose() * c);
  return p;
}

// ||beta(lambda)|| with beta_i = -c_hat_i / (e_i + lambda); +inf when a
// denominator vanishes against a nonzero numerator.
double beta_norm(const Pencil& p, double lambda) {
  double sq = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double den = p.evals(i) + lambda;
    const double num = p.c_hat(i);
    if (std::abs(den) < 1e-300) {
      if (std::abs(num) > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double t = num / den;
    sq += t * t;
  }
  return std::sqrt(sq);
}

TRSolution finish(const Pencil& p, const Eigen::Matrix2d& Q, const Eigen::Vector2d& c,
                  const Eigen::Vector2d& beta_hat, double lambda) {
  TRSolution sol;
  sol.alpha = p.r_inv * (p.evecs * beta_hat);
  sol.lambda = lambda;
  const double dm = c.dot(sol.alpha) + 0.5 * sol.alpha.dot(Q * sol.alpha);
  sol.predicted_reduction = std::max(0.0, -dm);
  return sol;
}

}  // namespace

double SubspaceKktReport::max_residual() const {
  return std::max({stationarity, feasibility, complementarity});
}

namespace {

TRSolution solve_drtr_equilibrated(const TwoDimModel& model);

}  // namespace

// The two span directions can differ in scale by many orders of magnitude
// near convergence; rescaling the coefficients to a unit-diagonal metric
// leaves lambda, the metric norm and the model value unchanged and keeps the
// pencil factorization well conditioned.
TRSolution solve_drtr(const TwoDimModel& model) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> raw;
  raw.computeDirect(model.G);
  if (raw.eigenvalues()(0) < -kMetricEigTol)
    throw NonPsdMetric("step metric has eigenvalue " + std::to_string(raw.eigenvalues()(0)));
  const double s0 = std::sqrt(model.G(0, 0));
  const double s1 = std::sqrt(model.G(1, 1));
  if (!(s0 > 0.0) || !(s1 > 0.0))
    throw std::invalid_argument("solve_drtr: singular metric, use the 1D fallback");
  const Eigen::Vector2d scale(1.0 / s0, 1.0 / s1);
  TwoDimModel scaled;
  scaled.Q = scale.asDiagonal() * model.Q * scale.asDiagonal();
  scaled.G = scale.asDiagonal() * model.G * scale.asDiagonal();
  scaled.c = scale.asDiagonal() * model.c;
  scaled.delta = model.delta;
  TRSolution sol = solve_drtr_equilibrated(scaled);
  sol.alpha = scale.asDiagonal() * sol.alpha;
  return sol;
}

namespace {

TRSolution solve_drtr_equilibrated(const TwoDimModel& model) {
  if (!(model.delta > 0.0)) throw std::invalid_argument("solve_drtr: delta must be positive");
  const Pencil p = factor_pencil(model.Q, model.c, model.G);
  const double e1 = p.evals(0);
  const double delta = model.delta;
  const double c_scale = std::max(1.0, p.c_hat.norm());

  // Interior solution: B positive definite and the Newton point inside.
  if (e1 > 0.0 && beta_norm(p, 0.0) <= delta) {
    Eigen::Vector2d beta_hat = -p.c_hat.cwiseQuotient(p.evals);
    return finish(p, model.Q, model.c, beta_hat, 0.0);
  }

  const double lambda_lo = std::max(0.0, -e1);

  // Hard case: c has (numerically) no component along the most negative
  // eigenvector and the least-squares point at lambda = -e1 is interior.
  // Fill the remaining radius along that eigenvector.
  if (e1 <= 0.0 && std::abs(p.c_hat(0)) <= 1e-13 * c_scale) {
    const double den = p.evals(1) + lambda_lo;
    const bool den_degenerate = std::abs(den) <= 1e-13 * std::max(1.0, std::abs(p.evals(1)));
    if (!den_degenerate || std::abs(p.c_hat(1)) <= 1e-13 * c_scale) {
      Eigen::Vector2d beta_hat = Eigen::Vector2d::Zero();
      if (!den_degenerate) beta_hat(1) = -p.c_hat(1) / den;
      if (beta_hat.norm() <= delta) {
        beta_hat(0) = std::sqrt(std::max(0.0, delta * delta - beta_hat.squaredNorm()));
        return finish(p, model.Q, model.c, beta_hat, lambda_lo);
      }
    }
  }

  // Boundary solution: bracket the secular root in (lambda_lo, hi] and close
  // in with bisection plus Newton steps on 1/delta - 1/||beta||.
  double lo = lambda_lo;
  double hi = lambda_lo + std::max({1.0, std::abs(e1), std::abs(p.evals(1)), p.c_hat.norm() / delta});
  int iter = 0;
  while (beta_norm(p, hi) > delta) {
    hi *= 2.0;
    if (++iter > kSecularMaxIter) throw NoConvergence("solve_drtr: secular bracket failed");
  }
  double lambda = hi;
  bool bracket_collapsed = false;
  for (iter = 0; iter < kSecularMaxIter; ++iter) {
    const double n = beta_norm(p, lambda);
    if (std::abs(n - delta) <= kSecularTol * std::max(1.0, delta)) break;
    if (n > delta) lo = lambda; else hi = lambda;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi)) {
      // near-hard case: the root sits against the pole at -e1 and lambda
      // cannot resolve it; take the feasible side and fill the boundary
      lambda = hi;
      bracket_collapsed = true;
      break;
    }
    // Newton step on psi(lambda) = 1/delta - 1/n(lambda)
    double dn_sq = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double den = p.evals(i) + lambda;
      if (std::abs(den) < 1e-300) { dn_sq = 0.0; break; }
      const double t = p.c_hat(i) / den;
      dn_sq += -2.0 * t * t / den;
    }
    double next;
    if (std::isfinite(n) && n > 0.0 && dn_sq != 0.0) {
      const double dn = dn_sq / (2.0 * n);
      const double psi = 1.0 / delta - 1.0 / n;
      const double dpsi = dn / (n * n);
      next = lambda - psi / dpsi;
    } else {
      next = 0.5 * (lo + hi);
    }
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    lambda = next;
  }
  if (iter >= kSecularMaxIter) throw NoConvergence("solve_drtr: secular iteration cap reached");

  Eigen::Vector2d beta_hat;
  for (int i = 0; i < 2; ++i) {
    const double den = p.evals(i) + lambda;
    beta_hat(i) = std::abs(den) > 1e-300 ? -p.c_hat(i) / den : 0.0;
  }
  if (bracket_collapsed && beta_hat.norm() < delta) {
    // fill along the bottom eigenvector; both roots reach the boundary, keep
    // the one with the lower model value
    const double rest = beta_hat(1) * beta_hat(1);
    const double root = std::sqrt(std::max(0.0, delta * delta - rest));
    Eigen::Vector2d cand_a = beta_hat, cand_b = beta_hat;
    cand_a(0) = root;
    cand_b(0) = -root;
    const auto value = [&](const Eigen::Vector2d& bh) {
      return p.c_hat.dot(bh) + 0.5 * (p.evals(0) * bh(0) * bh(0) + p.evals(1) * bh(1) * bh(1));
    };
    beta_hat = value(cand_a) <= value(cand_b) ? cand_a : cand_b;
  }
  return finish(p, model.Q, model.c, beta_hat, lambda);
}

}  // namespace

TRSolution solve_drtr_1d(double g_norm2, double gHg, double delta) {
  TRSolution sol;
  sol.alpha.setZero();
  if (!(delta > 0.0)) throw std::invalid_argument("solve_drtr_1d: delta must be positive");
  if (g_norm2 <= 0.0) return sol;

  const double g_norm = std::sqrt(g_norm2);
  const double a_max = delta / g_norm;
  double a;
  if (gHg > 0.0 && g_norm2 / gHg <= a_max) {
    a = g_norm2 / gHg;           // interior Newton point along -g
    sol.lambda = 0.0;
  } else {
    a = a_max;                   // boundary
    sol.lambda = std::max(0.0, (g_norm2 - gHg * a) / (a * g_norm2));
  }
  sol.alpha(0) = a;
  sol.predicted_reduction = std::max(0.0, g_norm2 * a - 0.5 * a * a * gHg);
  return sol;
}

Eigen::Vector2d solve_radius_free(const Eigen::Matrix2d& Q, const Eigen::Vector2d& c,
                                  const Eigen::Matrix2d& G, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("solve_radius_free: lambda must be >= 0");
  // same equilibration as solve_drtr; the indefiniteness test then reads the
  // scaled curvature, not the raw direction magnitudes
  Eigen::Vector2d scale(1.0, 1.0);
  if (G(0, 0) > 0.0 && G(1, 1) > 0.0)
    scale << 1.0 / std::sqrt(G(0, 0)), 1.0 / std::sqrt(G(1, 1));
  const Eigen::Matrix2d q_s = scale.asDiagonal() * Q * scale.asDiagonal();
  const Eigen::Matrix2d g_s = scale.asDiagonal() * G * scale.asDiagonal();
  const Eigen::Vector2d c_s = scale.asDiagonal() * c;
  Eigen::Matrix2d a = q_s + 2.0 * lambda * g_s;
  a = 0.5 * (a + a.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es;
  es.computeDirect(a);
  if (es.eigenvalues()(0) <= 1e-12)
    throw IndefiniteSystem("regularized curvature eigenvalue " +
                           std::to_string(es.eigenvalues()(0)));
  // exact solve in the eigenbasis
  const Eigen::Vector2d rhs = es.eigenvectors().transpose() * (-c_s);
  return scale.asDiagonal() * (es.eigenvectors() * rhs.cwiseQuotient(es.eigenvalues()));
}

TwoDimModel build_drtr_data(const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev,
                            const HvpFn& hvp, double delta) {
  const Eigen::VectorXd hg = hvp(g);
  const Eigen::VectorXd hd = hvp(d_prev);
  TwoDimModel m;
  m.Q(0, 0) = g.dot(hg);
  m.Q(1, 1) = d_prev.dot(hd);
  m.Q(0, 1) = m.Q(1, 0) = -0.5 * (d_prev.dot(hg) + g.dot(hd));
  m.c(0) = -g.squaredNorm();
  m.c(1) = g.dot(d_prev);
  m.G(0, 0) = g.squaredNorm();
  m.G(1, 1) = d_prev.squaredNorm();
  m.G(0, 1) = m.G(1, 0) = -g.dot(d_prev);
  m.delta = delta;
  return m;
}

Eigen::VectorXd lift_direction(const Eigen::Vector2d& alpha, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& d) {
  return -alpha(0) * g + alpha(1) * d;
}

bool span_degenerate(const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev) {
  const double g2 = g.squaredNorm();
  const double d2 = d_prev.squaredNorm();
  if (d_prev.size() == 0 || std::sqrt(d2) < 1e-12) return true;
  if (g2 == 0.0) return true;
  const double cross = g.dot(d_prev);
  const double det = g2 * d2 - cross * cross;  // det of the metric G
  return std::abs(det) < 1e-12 * g2 * d2;
}

SubspaceKktReport check_subspace_kkt(const Eigen::VectorXd& d_step, double lambda,
                                     const Eigen::VectorXd& g, const Eigen::VectorXd& d_prev,
                                     const HvpFn& hvp, double delta) {
  // Gram-Schmidt basis of span{g, d_prev} with rank tolerance 1e-10
  std::vector<Eigen::VectorXd> basis;
  for (const Eigen::VectorXd* v : {&g, &d_prev}) {
    if (v->size() == 0) continue;
    Eigen::VectorXd w = *v;
    const double scale = w.norm();
    for (const auto& b : basis) w -= b.dot(w) * b;
    if (w.norm() > 1e-10 * std::max(1.0, scale)) basis.push_back(w.normalized());
  }

  SubspaceKktReport rep;
  const double step_norm = d_step.norm();

  Eigen::VectorXd in_span = Eigen::VectorXd::Zero(d_step.size());
  for (const auto& b : basis) in_span += b.dot(d_step) * b;
  const double ortho = (d_step - in_span).norm();
  if (ortho > 1e-8 * std::max(step_norm, 1e-300))
    throw NotInSubspace("step has out-of-span component " + std::to_string(ortho));

  if (!basis.empty()) {
    // A sampled Hessian action is not symmetric; the reduced model is built
    // on its symmetrization, so the projected stationarity reads
    // b^T H_sym d = (b^T (H d) + d^T (H b)) / 2 per basis vector.
    const Eigen::VectorXd h_step = hvp(d_step);
    double sq = 0.0;
    for (const auto& b : basis) {
      const double t =
          0.5 * (b.dot(h_step) + d_step.dot(hvp(b))) + lambda * b.dot(d_step) + b.dot(g);
      sq += t * t;
    }
    rep.stationarity = std::sqrt(sq) / std::max(1.0, g.norm());
  }
  rep.feasibility = std::max(0.0, step_norm - delta) / std::max(1.0, delta);
  rep.complementarity = std::abs(lambda * (delta - step_norm)) / std::max(1.0, lambda * delta);
  return rep;
}

FdtrSolution solve_fdtr_steihaug(const Eigen::VectorXd& g, const HvpFn& hvp, double delta,
                                 double tol, int max_iter) {
  if (!(delta > 0.0)) throw std::invalid_argument("steihaug: delta must be positive");
  const Eigen::Index n = g.size();
  if (max_iter < 0) max_iter = static_cast<int>(n);

  FdtrSolution sol;
  sol.d = Eigen::VectorXd::Zero(n);
  const double g_norm = g.norm();
  if (g_norm == 0.0) {
    sol.stop = CgStop::zero_gradient;
    return sol;
  }

  // returns p + tau * dir on the boundary, tau > 0
  const auto to_boundary = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& dir) {
    const double dd = dir.squaredNorm();
    const double pd = p.dot(dir);
    const double pp = p.squaredNorm();
    const double tau = (-pd + std::sqrt(std::max(0.0, pd * pd - dd * (pp - delta * delta)))) / dd;
    return (p + tau * dir).eval();
  };

  Eigen::VectorXd r = g;
  Eigen::VectorXd dir = -r;
  double rr = r.squaredNorm();
  for (int k = 0; k < max_iter; ++k) {
    const Eigen::VectorXd h_dir = hvp(dir);
    const double curvature = dir.dot(h_dir);
    if (curvature <= 0.0) {
      sol.d = to_boundary(sol.d, dir);
      sol.boundary_hit = true;
      sol.stop = CgStop::negative_curvature;
      sol.cg_iterations = k;
      break;
    }
    const double step = rr / curvature;
    const Eigen::VectorXd next = sol.d + step * dir;
    if (next.norm() >= delta) {
      sol.d = to_boundary(sol.d, dir);
      sol.boundary_hit = true;
      sol.stop = CgStop::boundary;
      sol.cg_iterations = k;
      break;
    }
    sol.d = next;
    r += step * h_dir;
    const double rr_next = r.squaredNorm();
    sol.cg_iterations = k + 1;
    if (std::sqrt(rr_next) <= tol * g_norm) {
      sol.stop = CgStop::converged;
      break;
    }
    dir = -r + (rr_next / rr) * dir;
    rr = rr_next;
    if (k + 1 == max_iter) sol.stop = CgStop::max_iter;
  }

  if (sol.boundary_hit) {
    // multiplier estimate from the KKT identity H d + g = -lambda d
    const Eigen::VectorXd resid = hvp(sol.d) + g;
    const double dn2 = sol.d.squaredNorm();
    if (dn2 > 0.0) sol.lambda_hat = std::max(0.0, -sol.d.dot(resid) / dn2);
  }
  return sol;
}

double min_pencil_eigenvalue(const Eigen::Matrix2d& Q_raw, const Eigen::Matrix2d& G_raw) {
  Eigen::Vector2d scale(1.0, 1.0);
  if (G_raw(0, 0) > 0.0 && G_raw(1, 1) > 0.0)
    scale << 1.0 / std::sqrt(G_raw(0, 0)), 1.0 / std::sqrt(G_raw(1, 1));
  const Eigen::Matrix2d Q = scale.asDiagonal() * Q_raw * scale.asDiagonal();
  const Eigen::Matrix2d G = scale.asDiagonal() * G_raw * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> gs;
  gs.computeDirect(G);
  const double gmax = gs.eigenvalues()(1);
  if (gs.eigenvalues()(0) <= 1e-14 * std::max(1.0, gmax)) {
    // singular metric: restrict to the nondegenerate direction
    if (gmax <= 0.0) return 0.0;
    const Eigen::Vector2d u = gs.eigenvectors().col(1);
    return u.dot(Q * u) / gmax;
  }
  const Eigen::Vector2d inv_sqrt = gs.eigenvalues().cwiseSqrt().cwiseInverse();
  const Eigen::Matrix2d r_inv = gs.eigenvectors() * inv_sqrt.asDiagonal();
  Eigen::Matrix2d b = r_inv.transpose() * Q * r_inv;
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> bs;
  bs.computeDirect(b);
  return bs.eigenvalues()(0);
}

}  // namespace sopo

#include "sopo/oracles.hpp"

#include <cmath>
#include <limits>

#include "sopo/rng.hpp"

namespace sopo::oracle {

namespace {

double model_value(const TwoDimModel& model, const Eigen::Vector2d& alpha) {
  return model.c.dot(alpha) + 0.5 * alpha.dot(model.Q * alpha);
}

}  // namespace

double drtr_grid_minimum(const TwoDimModel& model, int n_angles, int n_radii) {
  // whiten the metric: beta = R alpha with G = R^T R
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> gs;
  gs.computeDirect(model.G);
  const Eigen::Vector2d w = gs.eigenvalues().cwiseMax(0.0);
  const Eigen::Matrix2d r_inv = gs.eigenvectors() * w.cwiseSqrt().cwiseInverse().asDiagonal();
  Eigen::Matrix2d b = r_inv.transpose() * model.Q * r_inv;
  b = 0.5 * (b + b.transpose()).eval();
  const Eigen::Vector2d c_t = r_inv.transpose() * model.c;
  const double delta = model.delta;

  double best = 0.0;  // beta = 0 is always feasible
  for (int k = 0; k < n_angles; ++k) {
    const double phi = 2.0 * M_PI * k / n_angles;
    const Eigen::Vector2d u(std::cos(phi), std::sin(phi));
    const double lin = c_t.dot(u);
    const double quad = u.dot(b * u);
    for (int j = 1; j <= n_radii; ++j) {
      const double r = delta * j / n_radii;
      const double v = lin * r + 0.5 * quad * r * r;
      if (v < best) best = v;
    }
  }

  // hard-case refinement: walk the most negative curvature direction around
  // the pseudo-inverse point at lambda = -min eigenvalue
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> bs;
  bs.computeDirect(b);
  const Eigen::Vector2d evals = bs.eigenvalues();
  const Eigen::Vector2d c_hat = bs.eigenvectors().transpose() * c_t;
  Eigen::Vector2d base_hat = Eigen::Vector2d::Zero();
  const double spread = evals(1) - evals(0);
  if (spread > 1e-13) base_hat(1) = -c_hat(1) / spread;
  if (base_hat.norm() <= delta) {
    const Eigen::Vector2d base = bs.eigenvectors() * base_hat;
    const Eigen::Vector2d dir = bs.eigenvectors().col(0);
    const double t_max = std::sqrt(std::max(0.0, delta * delta - base_hat.squaredNorm()));
    for (int j = -2000; j <= 2000; ++j) {
      const Eigen::Vector2d beta = base + (t_max * j / 2000.0) * dir;
      const double v = c_t.dot(beta) + 0.5 * beta.dot(b * beta);
      if (v < best) best = v;
    }
  }
  return best;
}

DenseTrSolution dense_tr_solve(const Eigen::MatrixXd& hess, const Eigen::VectorXd& g,
                               double delta) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (hess + hess.transpose()));
  const Eigen::VectorXd evals = es.eigenvalues();
  const Eigen::VectorXd g_hat = es.eigenvectors().transpose() * g;
  const Eigen::Index n = g.size();

  const auto norm_at = [&](double lambda) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double den = evals(i) + lambda;
      if (std::abs(den) < 1e-300) {
        if (std::abs(g_hat(i)) > 0.0) return std::numeric_limits<double>::infinity();
        continue;
      }
      const double t = g_hat(i) / den;
      sq += t * t;
    }
    return std::sqrt(sq);
  };
  const auto assemble = [&](double lambda) {
    Eigen::VectorXd d_hat(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double den = evals(i) + lambda;
      d_hat(i) = std::abs(den) > 1e-300 ? -g_hat(i) / den : 0.0;
    }
    return d_hat;
  };

  DenseTrSolution sol;
  const double e_min = evals(0);
  double lambda = 0.0;
  Eigen::VectorXd d_hat;
  if (e_min > 0.0 && norm_at(0.0) <= delta) {
    d_hat = assemble(0.0);
  } else {
    const double lambda_lo = std::max(0.0, -e_min);
    // hard case: no gradient component on the bottom eigenspace
    bool hard = e_min <= 0.0;
    for (Eigen::Index i = 0; i < n && hard; ++i)
      if (std::abs(evals(i) - e_min) <= 1e-12 * std::max(1.0, std::abs(e_min)) &&
          std::abs(g_hat(i)) > 1e-12 * std::max(1.0, g.norm()))
        hard = false;
    if (hard && norm_at(lambda_lo + 1e-14) <= delta) {
      lambda = lambda_lo;
      d_hat = assemble(lambda + 1e-14);
      // zero the bottom eigenspace coordinates, then fill the radius there
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(evals(i) - e_min) <= 1e-12 * std::max(1.0, std::abs(e_min))) d_hat(i) = 0.0;
      d_hat(0) = std::sqrt(std::max(0.0, delta * delta - d_hat.squaredNorm()));
    } else {
      double lo = lambda_lo;
      double hi = lambda_lo + std::max(1.0, evals.cwiseAbs().maxCoeff() + g.norm() / delta);
      while (norm_at(hi) > delta) hi *= 2.0;
      for (int it = 0; it < 300; ++it) {
        lambda = 0.5 * (lo + hi);
        if (norm_at(lambda) > delta) lo = lambda; else hi = lambda;
      }
      lambda = hi;
      d_hat = assemble(lambda);
    }
  }
  sol.d = es.eigenvectors() * d_hat;
  sol.lambda = lambda;
  sol.value = g.dot(sol.d) + 0.5 * sol.d.dot(hess * sol.d);
  return sol;
}

std::vector<std::pair<double, double>> gauss_legendre_01(int n) {
  // Newton iteration on P_n over [-1, 1], mapped to [0, 1]
  std::vector<std::pair<double, double>> out(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double weight = 2.0 / ((1.0 - x * x) * dp * dp);
    out[i] = {0.5 * (1.0 - x), 0.5 * weight};          // mirrored to ascending order
    out[n - 1 - i] = {0.5 * (1.0 + x), 0.5 * weight};
  }
  return out;
}

Eigen::VectorXd mean_gradient(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                              const Eigen::VectorXd& theta, int horizon,
                              const LinearBaseline* baseline, const FeatureMap* features) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(theta.size());
  for_each_trajectory(mdp, policy, theta, horizon, [&](const Trajectory& traj, double prob) {
    acc += prob * pgt_gradient(policy, traj, theta, mdp.gamma, baseline, features);
  });
  return acc;
}

Eigen::MatrixXd mean_hessian(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                             const Eigen::VectorXd& theta, int horizon, HessVariant variant,
                             double mu) {
  const Eigen::Index d = theta.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  HvpBatch one;
  one.theta = theta;
  one.mu = mu;
  one.variant = variant;
  for_each_trajectory(mdp, policy, theta, horizon, [&](const Trajectory& traj, double prob) {
    one.trajectories.assign(1, traj);
    for (Eigen::Index j = 0; j < d; ++j)
      acc.col(j) += prob * hessian_vector(policy, one, Eigen::VectorXd::Unit(d, j), mdp.gamma);
  });
  return acc;
}

Eigen::MatrixXd mean_gradient_scoresum_outer(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                                             const Eigen::VectorXd& theta, int horizon) {
  const Eigen::Index d = theta.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  for_each_trajectory(mdp, policy, theta, horizon, [&](const Trajectory& traj, double prob) {
    const Eigen::VectorXd g = pgt_gradient(policy, traj, theta, mdp.gamma);
    const Eigen::VectorXd s = score_sum(policy, traj, theta);
    acc.noalias() += prob * g * s.transpose();
  });
  return acc;
}

Eigen::MatrixXd dense_single_hessian(const SoftmaxPolicy& policy, const Trajectory& traj,
                                     const Eigen::VectorXd& theta, double gamma, double mu,
                                     HessVariant variant) {
  const Eigen::Index d = theta.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  // grad g term: sum_h Psi_h hessian(log pi_h)
  double tail = 0.0;
  std::vector<double> psi(traj.horizon());
  for (int i = traj.horizon() - 1; i >= 0; --i) {
    tail += std::pow(gamma, i) * traj.rewards[i];
    psi[i] = tail;
  }
  for (int h_idx = 0; h_idx < traj.horizon(); ++h_idx)
    h += psi[h_idx] *
         policy.score_hessian_dense(theta, traj.states[h_idx], traj.actions[h_idx]);

  if (variant == HessVariant::standard) {
    const Eigen::VectorXd g = pgt_gradient(policy, traj, theta, gamma);
    const Eigen::VectorXd s = score_sum(policy, traj, theta);
    h.noalias() += mu * g * s.transpose();
  } else {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
    double disc = 1.0;
    for (int h_idx = 0; h_idx < traj.horizon(); ++h_idx) {
      policy.add_score(theta, traj.states[h_idx], traj.actions[h_idx], 1.0, u);
      h.noalias() += (disc * traj.rewards[h_idx]) * u * u.transpose();
      disc *= gamma;
    }
  }
  return h;
}

Eigen::VectorXd havr_quadrature_mean(const SoftmaxPolicy& policy, const TabularMDP& mdp,
                                     const Eigen::VectorXd& theta_prev,
                                     const Eigen::VectorXd& theta_curr, int horizon,
                                     int quadrature_nodes) {
  const Eigen::VectorXd v = theta_curr - theta_prev;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(v.size());
  for (const auto& [node, weight] : gauss_legendre_01(quadrature_nodes)) {
    const Eigen::VectorXd theta_a = node * theta_curr + (1.0 - node) * theta_prev;
    Eigen::VectorXd mean_action = Eigen::VectorXd::Zero(v.size());
    for_each_trajectory(mdp, policy, theta_a, horizon, [&](const Trajectory& traj, double prob) {
      mean_action +=
          prob * (dense_single_hessian(policy, traj, theta_a, mdp.gamma, 1.0,
                                       HessVariant::standard) *
                  v);
    });
    acc += weight * mean_action;
  }
  return acc;
}

namespace {

TwoDimModel random_model(Rng& rng, double delta) {
  TwoDimModel m;
  const double q01 = rng.uniform(-2.0, 2.0);
  m.Q << rng.uniform(-2.0, 2.0), q01, q01, rng.uniform(-2.0, 2.0);
  Eigen::Matrix2d a;
  a << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
      rng.uniform(-1.0, 1.0);
  m.G = a.transpose() * a + 1e-3 * Eigen::Matrix2d::Identity();
  m.c << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
  m.delta = delta;
  return m;
}

CheckResult max_check(const std::string& name, double observed, double tolerance,
                      const std::string& note = "") {
  return {name, observed <= tolerance, observed, tolerance, note};
}

}  // namespace

std::vector<CheckResult> solver_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  const double deltas[3] = {0.1, 1.0, 10.0};

  double worst_gap = -std::numeric_limits<double>::infinity();
  double worst_kkt = 0.0;
  double worst_feas = 0.0;
  double worst_slack = 0.0;
  double worst_psd = 0.0;
  double worst_reduction = 0.0;
  double worst_equality_gap = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const TwoDimModel m = random_model(rng, deltas[i % 3]);
    const TRSolution sol = solve_drtr(m);
    const double value = model_value(m, sol.alpha);
    worst_gap = std::max(worst_gap, value - drtr_grid_minimum(m));

    const Eigen::Vector2d resid = (m.Q + sol.lambda * m.G) * sol.alpha + m.c;
    worst_kkt = std::max(worst_kkt, resid.norm() / std::max(1.0, m.c.norm()));
    const double g_norm = std::sqrt(sol.alpha.dot(m.G * sol.alpha));
    worst_feas = std::max(worst_feas, (g_norm - m.delta) / m.delta);
    worst_slack = std::max(worst_slack, std::abs(sol.lambda * (m.delta - g_norm)) /
                                            std::max(1.0, sol.lambda * m.delta));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es;
    es.computeDirect(Eigen::Matrix2d(m.Q + sol.lambda * m.G));
    worst_psd = std::max(worst_psd, -es.eigenvalues()(0));
    worst_reduction =
        std::max(worst_reduction,
                 0.5 * sol.lambda * g_norm * g_norm - sol.predicted_reduction);
    worst_equality_gap =
        std::max(worst_equality_gap,
                 std::abs(sol.predicted_reduction - 0.5 * sol.lambda * g_norm * g_norm));
  }
  out.push_back(max_check("drtr.optimality_gap_vs_grid", worst_gap, 1e-5,
                          "model value minus grid-search minimum, 1000 instances"));
  out.push_back(max_check("drtr.kkt_stationarity", worst_kkt, 1e-8));
  out.push_back(max_check("drtr.feasibility", worst_feas, 1e-9));
  out.push_back(max_check("drtr.complementary_slackness", worst_slack, 1e-8));
  out.push_back(max_check("drtr.psd_shifted_curvature", worst_psd, 1e-9,
                          "most negative eigenvalue of Q + lambda G"));
  out.push_back(max_check("drtr.reduction_inequality", worst_reduction, 1e-10,
                          "violation of reduction >= lambda ||alpha||_G^2 / 2"));
  out.push_back(max_check("drtr.reduction_equality_gap", worst_equality_gap,
                          std::numeric_limits<double>::infinity(),
                          "informational: interior solutions exceed the boundary identity"));

  // lifted DRTR solutions satisfy the projected full-scale KKT system
  double worst_subspace = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int n = 6 + static_cast<int>(rng.uniform() * 6);
    Eigen::MatrixXd h(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c <= r; ++c) h(r, c) = h(c, r) = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd g(n), d_prev(n);
    for (int r = 0; r < n; ++r) {
      g(r) = rng.uniform(-1.0, 1.0);
      d_prev(r) = rng.uniform(-1.0, 1.0);
    }
    const HvpFn hvp = [&h](const Eigen::VectorXd& v) { return Eigen::VectorXd(h * v); };
    if (span_degenerate(g, d_prev)) continue;
    const double delta = deltas[i % 3];
    const TwoDimModel m = build_drtr_data(g, d_prev, hvp, delta);
    const TRSolution sol = solve_drtr(m);
    const Eigen::VectorXd step = lift_direction(sol.alpha, g, d_prev);
    const SubspaceKktReport rep = check_subspace_kkt(step, sol.lambda, g, d_prev, hvp, delta);
    worst_subspace = std::max(worst_subspace, rep.max_residual());
  }
  out.push_back(max_check("drtr.subspace_equivalence", worst_subspace, 1e-8,
                          "projected KKT residuals of lifted solutions"));

  // Steihaug: feasibility, Cauchy domination, dense-oracle sandwich, and
  // agreement with the Newton step on interior positive definite instances
  double worst_newton = 0.0;
  double worst_feas_cg = 0.0;
  double worst_cauchy = 0.0;
  double worst_below_oracle = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int n = 8;
    Eigen::MatrixXd a(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) a(r, c) = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd h = a.transpose() * a;
    if (i % 2 == 1) h.diagonal().array() -= 1.5;  // indefinite half of the sample
    Eigen::VectorXd g(n);
    for (int r = 0; r < n; ++r) g(r) = rng.uniform(-1.0, 1.0);
    const double delta = (i % 4 < 2) ? 50.0 : 0.5;
    const HvpFn hvp = [&h](const Eigen::VectorXd& v) { return Eigen::VectorXd(h * v); };
    const FdtrSolution sol = solve_fdtr_steihaug(g, hvp, delta, 1e-10, 4 * n);

    worst_feas_cg = std::max(worst_feas_cg, sol.d.norm() - delta * (1.0 + 1e-9));
    const double m_sol = g.dot(sol.d) + 0.5 * sol.d.dot(h * sol.d);
    // Cauchy point
    const double ghg = g.dot(h * g);
    double t_c = ghg > 0.0 ? g.squaredNorm() / ghg : std::numeric_limits<double>::infinity();
    t_c = std::min(t_c, delta / g.norm());
    const Eigen::VectorXd d_c = -t_c * g;
    const double m_c = g.dot(d_c) + 0.5 * d_c.dot(h * d_c);
    worst_cauchy = std::max(worst_cauchy, m_sol - m_c);

    const DenseTrSolution dense = dense_tr_solve(h, g, delta);
    worst_below_oracle = std::max(worst_below_oracle, dense.value - m_sol - 1e-9);
    if (i % 2 == 0 && !sol.boundary_hit)
      worst_newton = std::max(worst_newton, std::abs(m_sol - dense.value));
  }
  out.push_back(max_check("steihaug.feasibility", worst_feas_cg, 0.0));
  out.push_back(max_check("steihaug.cauchy_domination", worst_cauchy, 1e-10,
                          "model value never above the Cauchy point"));
  out.push_back(max_check("steihaug.not_below_exact_minimum", worst_below_oracle, 1e-9,
                          "dense oracle minimum stays a lower bound"));
  out.push_back(max_check("steihaug.interior_matches_oracle", worst_newton, 1e-6,
                          "interior CG solutions agree with the dense solve"));
  return out;
}

std::vector<CheckResult> estimator_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const TabularMDP mdp = random_mdp(3, 3, 2, 1.0, 0.9);  // the bench3x2 instance
  const int horizon = 3;
  const SoftmaxPolicy policy(mdp.n_states, mdp.n_actions);
  Rng rng(seed);
  Eigen::VectorXd theta(policy.param_dim());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = 0.5 * rng.normal();

  // pathwise PGT == GPOMDP
  double worst_path = 0.0;
  for (int i = 0; i < 50; ++i) {
    Rng sub = rng.spawn();
    const Trajectory traj = sample_trajectory(mdp, policy, theta, horizon, sub);
    worst_path = std::max(worst_path, (pgt_gradient(policy, traj, theta, mdp.gamma) -
                                       gpomdp_gradient(policy, traj, theta, mdp.gamma))
                                          .lpNorm<Eigen::Infinity>());
  }
  out.push_back(max_check("estimators.pgt_equals_gpomdp", worst_path, 1e-12));

  // gradient unbiasedness against both exact oracles
  const Eigen::VectorXd g_enum = mean_gradient(policy, mdp, theta, horizon);
  const Eigen::VectorXd g_fd = exact_gradient_fd(mdp, policy, theta, horizon);
  const Eigen::VectorXd g_dp = exact_gradient_dp(mdp, policy, theta, horizon);
  out.push_back(max_check("estimators.gradient_unbiased_vs_fd",
                          (g_enum - g_fd).lpNorm<Eigen::Infinity>(), 1e-6));
  out.push_back(max_check("oracles.fd_gradient_vs_dp_gradient",
                          (g_fd - g_dp).lpNorm<Eigen::Infinity>(), 1e-6,
                          "two independent exact-gradient routes"));

  // Hessian estimator unbiasedness, both unbiased variants
  const Eigen::MatrixXd h_exact = exact_hessian_fd(mdp, policy, theta, horizon);
  const Eigen::MatrixXd h_std = mean_hessian(policy, mdp, theta, horizon, HessVariant::standard);
  const Eigen::MatrixXd h_vr = mean_hessian(policy, mdp, theta, horizon, HessVariant::vr_uut);
  out.push_back(max_check("estimators.hessian_standard_unbiased",
                          (h_std - h_exact).cwiseAbs().maxCoeff(), 1e-5));
  out.push_back(max_check("estimators.hessian_vr_unbiased",
                          (h_vr - h_exact).cwiseAbs().maxCoeff(), 1e-5));

  // biased estimator shifts the mean by exactly (1 - mu) E[g gradlogp^T]
  const double mu = 1.0 / 500.0;
  const Eigen::MatrixXd h_mu = mean_hessian(policy, mdp, theta, horizon, HessVariant::standard, mu);
  const Eigen::MatrixXd outer = mean_gradient_scoresum_outer(policy, mdp, theta, horizon);
  out.push_back(max_check("estimators.biased_mu_mean_shift",
                          (h_std - h_mu - (1.0 - mu) * outer).cwiseAbs().maxCoeff(), 1e-8));

  // any state-dependent baseline leaves the gradient mean unchanged
  LinearBaseline arbitrary;
  arbitrary.fitted = true;
  arbitrary.weights = Eigen::VectorXd(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) arbitrary.weights(s) = 0.3 * s - 0.7;
  const FeatureMap feats = one_hot_features(mdp.n_states);
  const Eigen::VectorXd g_base = mean_gradient(policy, mdp, theta, horizon, &arbitrary, &feats);
  out.push_back(max_check("estimators.baseline_invariance",
                          (g_base - g_enum).lpNorm<Eigen::Infinity>(), 1e-10));

  // second moments against the analysis bounds
  const TheoryConstants constants = softmax_constants(mdp, horizon);
  for (const auto& [kind, name] :
       {std::pair{EstimatorKind::gradient, "estimators.gradient_moment_bound"},
        std::pair{EstimatorKind::hessian_standard, "estimators.hessian_moment_bound"},
        std::pair{EstimatorKind::hessian_vr, "estimators.hessian_vr_moment_bound"}}) {
    const VarianceReport rep = variance_report(policy, mdp, theta, horizon, kind, constants);
    out.push_back(max_check(name, rep.second_moment, rep.bound, "exact moment vs G bound"));
  }

  // exact batch scaling: E||mean of m - grad J||^2 == single-sample / m
  {
    const TabularMDP micro = random_mdp(11, 1, 2, 1.0, 0.9);
    const SoftmaxPolicy mp(1, 2);
    Eigen::VectorXd mtheta(2);
    mtheta << 0.3, -0.4;
    std::vector<Eigen::VectorXd> grads;
    std::vector<double> probs;
    const Eigen::VectorXd mean = exact_gradient_dp(micro, mp, mtheta, 1);
    double single = 0.0;
    for_each_trajectory(micro, mp, mtheta, 1, [&](const Trajectory& traj, double prob) {
      grads.push_back(pgt_gradient(mp, traj, mtheta, micro.gamma));
      probs.push_back(prob);
      single += prob * (grads.back() - mean).squaredNorm();
    });
    const int m = 10;
    double batch = 0.0;
    std::vector<int> idx(m, 0);
    for (;;) {
      double prob = 1.0;
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
      for (int j = 0; j < m; ++j) {
        prob *= probs[idx[j]];
        sum += grads[idx[j]];
      }
      batch += prob * (sum / m - mean).squaredNorm();
      int j = 0;
      while (j < m && ++idx[j] == static_cast<int>(grads.size())) idx[j++] = 0;
      if (j == m) break;
    }
    out.push_back(max_check("estimators.batch_variance_scaling",
                            std::abs(batch - single / m), 1e-12,
                            "product-space enumeration at batch size 10"));
  }

  // HAVR: quadrature mean of the correction equals the gradient difference
  double worst_havr = 0.0;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd delta_theta(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) delta_theta(k) = rng.normal();
    delta_theta *= 0.15 / delta_theta.norm();
    const Eigen::VectorXd theta_prev = theta - delta_theta;
    const Eigen::VectorXd lhs = havr_quadrature_mean(policy, mdp, theta_prev, theta, horizon);
    const Eigen::VectorXd rhs = exact_gradient_dp(mdp, policy, theta, horizon) -
                                exact_gradient_dp(mdp, policy, theta_prev, horizon);
    worst_havr = std::max(worst_havr, (lhs - rhs).lpNorm<Eigen::Infinity>());
  }
  out.push_back(max_check("estimators.havr_telescoping_quadrature", worst_havr, 1e-6));

  // biased-estimator MSE matches the quadratic decomposition term by term
  {
    const Eigen::Index d = theta.size();
    Eigen::MatrixXd mean_a = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd mean_b = Eigen::MatrixXd::Zero(d, d);
    double e_b2 = 0.0, var_a = 0.0, cov_ab = 0.0;
    std::vector<Eigen::MatrixXd> a_list, b_list;
    std::vector<double> p_list;
    for_each_trajectory(mdp, policy, theta, horizon, [&](const Trajectory& traj, double prob) {
      const Eigen::MatrixXd b =
          pgt_gradient(policy, traj, theta, mdp.gamma) *
          score_sum(policy, traj, theta).transpose();
      const Eigen::MatrixXd a =
          dense_single_hessian(policy, traj, theta, mdp.gamma, 0.0, HessVariant::standard);
      mean_a += prob * a;
      mean_b += prob * b;
      a_list.push_back(a);
      b_list.push_back(b);
      p_list.push_back(prob);
    });
    for (std::size_t i = 0; i < p_list.size(); ++i) {
      e_b2 += p_list[i] * b_list[i].squaredNorm();
      var_a += p_list[i] * (a_list[i] - mean_a).squaredNorm();
      cov_ab += p_list[i] * ((a_list[i] - mean_a).array() * (b_list[i] - mean_b).array()).sum();
    }
    double worst_mse = 0.0;
    for (const double mu_k : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      double mse = 0.0;
      for (std::size_t i = 0; i < p_list.size(); ++i)
        mse += p_list[i] * (a_list[i] + mu_k * b_list[i] - h_exact).squaredNorm();
      const double predicted = (1.0 - 2.0 * mu_k) * mean_b.squaredNorm() +
                               mu_k * mu_k * e_b2 + var_a + 2.0 * mu_k * cov_ab;
      worst_mse = std::max(worst_mse, std::abs(mse - predicted));
    }
    out.push_back(max_check("estimators.biased_mse_decomposition", worst_mse, 1e-8,
                            "Frobenius MSE quadratic in mu, five grid points"));
  }

  // truncation bounds dominate observed horizon-doubling gaps
  {
    const TabularMDP two = random_mdp(5, 2, 2, 1.0, 0.9);
    const SoftmaxPolicy tp(2, 2);
    Eigen::VectorXd ttheta = Eigen::VectorXd::Zero(tp.param_dim());
    const PolicyConstants pc = policy_constants(tp);
    const int h0 = 6;
    const TruncationBounds tb =
        truncation_bounds(two.reward_bound, two.gamma, h0, pc.score_bound, pc.hessian_bound);
    const double value_gap = std::abs(exact_objective(two, tp, ttheta, h0) -
                                      exact_objective(two, tp, ttheta, 2 * h0));
    const double grad_gap = (exact_gradient_dp(two, tp, ttheta, h0) -
                             exact_gradient_dp(two, tp, ttheta, 2 * h0))
                                .norm();
    out.push_back(max_check("mdp.truncation_value_bound", value_gap, tb.value_bound));
    out.push_back(max_check("mdp.truncation_gradient_bound", grad_gap, tb.grad_bound));
  }

  // negative control: a corrupted fixture must fail validation
  {
    TabularMDP bad = mdp;
    bad.reward(0, 0) = 2.5 * bad.reward_bound;
    bool threw = false;
    try {
      bad.validate();
    } catch (const std::exception&) {
      threw = true;
    }
    out.push_back({"mdp.invariant_negative_control", threw, threw ? 1.0 : 0.0, 1.0,
                   "reward-bound violation detected"});
  }
  return out;
}

}  // namespace sopo::oracle

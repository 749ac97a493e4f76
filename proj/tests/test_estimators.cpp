#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sopo/estimators.hpp"
#include "sopo/oracles.hpp"
#include "sopo/rng.hpp"
#include "sopo/schedule.hpp"

using namespace sopo;

TEST_CASE("pgt_gradient hand examples") {
  const SoftmaxPolicy policy(1, 2);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  Trajectory traj;
  traj.states = {0};
  traj.actions = {0};
  traj.rewards = {1.0};

  const Eigen::VectorXd g = pgt_gradient(policy, traj, zero, 0.9);
  CHECK(g(0) == doctest::Approx(0.5));
  CHECK(g(1) == doctest::Approx(-0.5));
  CHECK(gpomdp_gradient(policy, traj, zero, 0.9)(0) == doctest::Approx(0.5));

  traj.rewards = {0.0};
  CHECK(pgt_gradient(policy, traj, zero, 0.9).norm() == doctest::Approx(0.0));
  CHECK(gpomdp_gradient(policy, traj, zero, 0.9).norm() == doctest::Approx(0.0));
}

TEST_CASE("PGT and GPOMDP coincide pathwise") {
  const TabularMDP mdp = random_mdp(3, 3, 2, 1.0, 0.9);
  const SoftmaxPolicy policy(3, 2);
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd theta(6);
    for (Eigen::Index i = 0; i < 6; ++i) theta(i) = rng.normal();
    Rng sub = rng.spawn();
    const Trajectory traj = sample_trajectory(mdp, policy, theta, 6, sub);
    const Eigen::VectorXd a = pgt_gradient(policy, traj, theta, mdp.gamma);
    const Eigen::VectorXd b = gpomdp_gradient(policy, traj, theta, mdp.gamma);
    CHECK((a - b).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("hessian_vector") {
  const TabularMDP mdp = random_mdp(3, 3, 2, 1.0, 0.9);
  const SoftmaxPolicy policy(3, 2);
  Rng rng(32);
  Eigen::VectorXd theta(6);
  for (Eigen::Index i = 0; i < 6; ++i) theta(i) = 0.5 * rng.normal();

  SUBCASE("zero vector maps to zero") {
    Rng sub = rng.spawn();
    HvpBatch batch;
    batch.theta = theta;
    batch.trajectories = {sample_trajectory(mdp, policy, theta, 4, sub)};
    CHECK(hessian_vector(policy, batch, Eigen::VectorXd::Zero(6), mdp.gamma).norm() ==
          doctest::Approx(0.0));
  }
  SUBCASE("horizon one: standard and vr variants coincide pathwise") {
    for (int trial = 0; trial < 50; ++trial) {
      Rng sub = rng.spawn();
      HvpBatch batch;
      batch.theta = theta;
      batch.trajectories = {sample_trajectory(mdp, policy, theta, 1, sub)};
      Eigen::VectorXd v(6);
      for (Eigen::Index i = 0; i < 6; ++i) v(i) = rng.normal();
      batch.variant = HessVariant::standard;
      const Eigen::VectorXd hv_std = hessian_vector(policy, batch, v, mdp.gamma);
      batch.variant = HessVariant::vr_uut;
      const Eigen::VectorXd hv_vr = hessian_vector(policy, batch, v, mdp.gamma);
      CHECK((hv_std - hv_vr).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
  SUBCASE("batch mean equals the mean of single-trajectory estimates") {
    HvpBatch batch;
    batch.theta = theta;
    Rng sub = rng.spawn();
    for (int i = 0; i < 7; ++i)
      batch.trajectories.push_back(sample_trajectory(mdp, policy, theta, 4, sub));
    Eigen::VectorXd v(6);
    for (Eigen::Index i = 0; i < 6; ++i) v(i) = rng.normal();
    const Eigen::VectorXd whole = hessian_vector(policy, batch, v, mdp.gamma);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(6);
    for (const auto& traj : batch.trajectories) {
      HvpBatch one;
      one.theta = theta;
      one.trajectories = {traj};
      acc += hessian_vector(policy, one, v, mdp.gamma);
    }
    CHECK((whole - acc / 7.0).lpNorm<Eigen::Infinity>() <= 1e-13);
  }
}

TEST_CASE("optimal_mu") {
  TheoryConstants c;
  c.score_bound = std::sqrt(2.0);
  c.hessian_bound = 0.0;
  c.gamma = 0.9;
  c.horizon = 10;
  CHECK(optimal_mu(c) == doctest::Approx(1.0));

  c.hessian_bound = 0.5;
  CHECK(optimal_mu(c) == doctest::Approx(1.0 - std::sqrt(2.0) * 0.5 / (0.1 * 2.0 * 100.0))
                             .epsilon(1e-12));
  CHECK(optimal_mu(c) == doctest::Approx(0.96464466).epsilon(1e-7));

  c.horizon = 1;  // raw formula goes negative, clamped at zero
  CHECK(optimal_mu(c) == doctest::Approx(0.0));
}

TEST_CASE("havr_correction") {
  const TabularMDP mdp = random_mdp(3, 3, 2, 1.0, 0.9);
  const SoftmaxPolicy policy(3, 2);
  Rng rng(33);
  Eigen::VectorXd theta(6);
  for (Eigen::Index i = 0; i < 6; ++i) theta(i) = 0.4 * rng.normal();

  SUBCASE("no movement means a zero correction and no sampling") {
    long env_steps = 0;
    const Eigen::VectorXd xi =
        havr_correction(policy, mdp, theta, theta, 3, mdp.gamma, 50, rng, &env_steps);
    CHECK(xi.norm() == doctest::Approx(0.0));
    CHECK(env_steps == 0);
  }
  SUBCASE("Monte-Carlo mean sits within 4 sigma of the quadrature value") {
    Eigen::VectorXd step(6);
    for (Eigen::Index i = 0; i < 6; ++i) step(i) = rng.normal();
    step *= 0.2 / step.norm();
    const Eigen::VectorXd theta_prev = theta - step;
    const Eigen::VectorXd target =
        oracle::havr_quadrature_mean(policy, mdp, theta_prev, theta, 3);

    const int n = 100000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(6);
    double sum_sq = 0.0;
    Rng sampler(34);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd xi =
          havr_correction(policy, mdp, theta_prev, theta, 3, mdp.gamma, 1, sampler);
      sum += xi;
      sum_sq += (xi - target).squaredNorm();
    }
    const Eigen::VectorXd mc = sum / n;
    const double sigma = std::sqrt(sum_sq / n / n);  // std of the n-sample mean
    CHECK((mc - target).norm() <= 4.0 * sigma);
  }
}

TEST_CASE("fit_linear_baseline") {
  const FeatureMap bias_only = [](int) { return Eigen::VectorXd::Ones(1); };

  SUBCASE("constant returns produce that constant weight") {
    Trajectory traj;
    traj.states = {0};
    traj.actions = {0};
    traj.rewards = {2.5};
    const LinearBaseline b = fit_linear_baseline({traj, traj, traj}, 0.9, bias_only, 1);
    CHECK(b.fitted);
    CHECK(b.weights(0) == doctest::Approx(2.5).epsilon(1e-12));
  }
  SUBCASE("zero rewards produce a zero baseline") {
    Trajectory traj;
    traj.states = {0, 1, 0};
    traj.actions = {0, 0, 0};
    traj.rewards = {0.0, 0.0, 0.0};
    const FeatureMap one_hot = one_hot_features(2);
    const LinearBaseline b = fit_linear_baseline({traj}, 0.9, one_hot, 2);
    CHECK(b.weights.lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  SUBCASE("normal equations hold on a seeded batch") {
    const TabularMDP mdp = random_mdp(3, 3, 2, 1.0, 0.9);
    const SoftmaxPolicy policy(3, 2);
    Rng rng(35);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(6);
    std::vector<Trajectory> batch;
    for (int i = 0; i < 40; ++i) {
      Rng sub = rng.spawn();
      batch.push_back(sample_trajectory(mdp, policy, theta, 5, sub));
    }
    const FeatureMap feats = one_hot_features(3);
    const LinearBaseline b = fit_linear_baseline(batch, mdp.gamma, feats, 3);
    // residual orthogonality: sum phi (psi - w.phi) = 0
    Eigen::VectorXd resid = Eigen::VectorXd::Zero(3);
    for (const auto& traj : batch) {
      double tail = 0.0;
      std::vector<double> psi(traj.horizon());
      for (int i = traj.horizon() - 1; i >= 0; --i) {
        tail += std::pow(mdp.gamma, i) * traj.rewards[i];
        psi[i] = tail;
      }
      for (int h = 0; h < traj.horizon(); ++h) {
        const Eigen::VectorXd phi = feats(traj.states[h]);
        resid += phi * (psi[h] - b.weights.dot(phi));
      }
    }
    CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-8);
  }
  SUBCASE("rank-deficient features fall back to ridge") {
    Trajectory traj;
    traj.states = {0};
    traj.actions = {0};
    traj.rewards = {1.0};
    const FeatureMap rank1 = [](int) {
      Eigen::VectorXd phi(2);
      phi << 1.0, 1.0;  // two identical features: singular Gram
      return phi;
    };
    const LinearBaseline b = fit_linear_baseline({traj}, 0.9, rank1, 2);
    CHECK(b.ridged);
    CHECK(b.fitted);
  }
}

TEST_CASE("variance_report degenerate instance has zero variance") {
  // one action: the score is identically zero and every estimate is exact
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.gamma = 0.9;
  mdp.reward_bound = 1.0;
  mdp.transition.assign(2, Eigen::MatrixXd::Zero(1, 2));
  mdp.transition[0](0, 1) = 1.0;
  mdp.transition[1](0, 0) = 1.0;
  mdp.reward = Eigen::MatrixXd::Constant(2, 1, 0.5);
  mdp.initial_dist = Eigen::VectorXd::Zero(2);
  mdp.initial_dist(0) = 1.0;
  const SoftmaxPolicy policy(2, 1);
  const TheoryConstants constants = softmax_constants(mdp, 4);
  const VarianceReport rep = variance_report(policy, mdp, Eigen::VectorXd::Zero(2), 4,
                                             EstimatorKind::gradient, constants);
  CHECK(rep.second_moment == doctest::Approx(0.0));
  CHECK(rep.within_bound());
}

TEST_CASE("theory schedule formulas") {
  TheoryConstants c;
  c.reward_bound = 1.0;
  c.score_bound = 1.0;
  c.hessian_bound = 1.0;
  c.gamma = 0.0;  // G_g = 1 exactly
  c.horizon = 1;
  c.hess_lipschitz = 1.0;
  REQUIRE(c.grad_moment_bound() == doctest::Approx(1.0));

  SUBCASE("DR formulas") {
    const ScheduleConfig cfg = theory_schedule(c, 0.01, 15, ScheduleVariant::dr, 1.0);
    CHECK(cfg.batch_grad == 1'440'000);
    CHECK(cfg.delta == doctest::Approx(0.2));
    CHECK(cfg.iterations == 24'000);
    CHECK(cfg.batch_hess ==
          static_cast<long>(std::ceil(22.0 * 576.0 * c.hess_moment_bound() *
                                      c.hess_moment_bound() * std::log(15.0) / 0.01)));
  }
  SUBCASE("DVR formulas") {
    const ScheduleConfig cfg = theory_schedule(c, 0.01, 15, ScheduleVariant::dvr, 1.0);
    CHECK(cfg.epoch_length == 2);  // ceil(1 / (8 sqrt(0.01)))
    CHECK(cfg.batch_epoch == 2'880'000);
    const double gh2 = c.hess_moment_bound() * c.hess_moment_bound();
    CHECK(cfg.batch_havr == static_cast<long>(std::ceil(288.0 * gh2 / std::pow(0.01, 1.5))));
  }
  SUBCASE("epsilon precondition for the variance-reduced schedule") {
    // G_H^2 = 2 here, so the threshold is 0.5
    CHECK_THROWS_AS(theory_schedule(c, 0.6, 15, ScheduleVariant::dvr, 1.0), EpsilonTooLarge);
    CHECK_NOTHROW(theory_schedule(c, 0.4, 15, ScheduleVariant::dvr, 1.0));
    CHECK_THROWS_AS(theory_schedule(c, 0.6, 15, ScheduleVariant::fdtr_vr, 1.0), EpsilonTooLarge);
    CHECK_NOTHROW(theory_schedule(c, 0.6, 15, ScheduleVariant::fdtr, 1.0));
  }
}

TEST_CASE("oracle estimator suite is green") {
  for (const auto& check : oracle::estimator_checks(2027)) {
    INFO(check.name, " observed=", check.observed, " tol=", check.tolerance);
    CHECK(check.pass);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sopo/optimizers.hpp"
#include "sopo/problem.hpp"
#include "sopo/rng.hpp"

using namespace sopo;

namespace {

// min 1/2 theta^T A theta - b^T theta with positive definite A
DeterministicProblem quadratic_problem(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return DeterministicProblem(
      a.rows(), [a, b](const Eigen::VectorXd& x) { return 0.5 * x.dot(a * x) - b.dot(x); },
      [a, b](const Eigen::VectorXd& x) { return Eigen::VectorXd(a * x - b); },
      [a](const Eigen::VectorXd&, const Eigen::VectorXd& v) { return Eigen::VectorXd(a * v); });
}

DeterministicProblem rosenbrock_problem() {
  return DeterministicProblem(
      2,
      [](const Eigen::VectorXd& x) {
        const double p = 1.0 - x(0);
        const double q = x(1) - x(0) * x(0);
        return p * p + 100.0 * q * q;
      },
      [](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(2);
        const double q = x(1) - x(0) * x(0);
        g(0) = -2.0 * (1.0 - x(0)) - 400.0 * x(0) * q;
        g(1) = 200.0 * q;
        return g;
      },
      [](const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
        Eigen::Matrix2d h;
        h(0, 0) = 2.0 - 400.0 * (x(1) - 3.0 * x(0) * x(0));
        h(0, 1) = h(1, 0) = -400.0 * x(0);
        h(1, 1) = 200.0;
        return Eigen::VectorXd(h * v);
      });
}

// strict saddle at the origin, minima at x = +-1
DeterministicProblem saddle_problem() {
  return DeterministicProblem(
      2,
      [](const Eigen::VectorXd& x) {
        return 0.25 * std::pow(x(0), 4) - 0.5 * x(0) * x(0) + 0.5 * x(1) * x(1);
      },
      [](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(2);
        g(0) = x(0) * x(0) * x(0) - x(0);
        g(1) = x(1);
        return g;
      },
      [](const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
        Eigen::Vector2d hv;
        hv(0) = (3.0 * x(0) * x(0) - 1.0) * v(0);
        hv(1) = v(1);
        return Eigen::VectorXd(hv);
      });
}

TabularMDP zero_reward_mdp() {
  TabularMDP mdp = random_mdp(51, 3, 2, 1.0, 0.9);
  mdp.reward.setZero();
  return mdp;
}

}  // namespace

TEST_CASE("basic DR-SOPO") {
  SUBCASE("single Newton step on a 1D quadratic") {
    auto problem = quadratic_problem(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
    OptimizerState state = init_state(Eigen::VectorXd::Ones(1));
    ScheduleConfig schedule;
    schedule.delta = 100.0;
    Rng rng(1);
    drsopo_step(state, problem, schedule, rng);
    CHECK(std::abs(state.theta(0)) <= 1e-12);
  }
  SUBCASE("first iteration takes the 1D fallback in the -g direction") {
    Eigen::MatrixXd a(2, 2);
    a << 3.0, 1.0, 1.0, 2.0;
    auto problem = quadratic_problem(a, Eigen::VectorXd::Ones(2));
    OptimizerState state = init_state(Eigen::VectorXd::Zero(2));
    ScheduleConfig schedule;
    schedule.delta = 0.05;
    Rng rng(2);
    StepDiagnostics diag;
    const Eigen::VectorXd g0 = problem.exact_gradient(state.theta);
    drsopo_step(state, problem, schedule, rng, &diag);
    CHECK(diag.used_1d_fallback);
    // step is antiparallel to g and respects the radius
    const double cosine = state.theta.dot(-g0) / (state.theta.norm() * g0.norm());
    CHECK(cosine == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.theta.norm() <= schedule.delta * (1.0 + 1e-9));
  }
  SUBCASE("zero-reward MDP leaves the parameters unchanged") {
    const TabularMDP mdp = zero_reward_mdp();
    MdpProblem problem(mdp, SoftmaxPolicy(3, 2), 4);
    OptimizerState state = init_state(Eigen::VectorXd::Zero(6));
    ScheduleConfig schedule;
    schedule.batch_grad = 5;
    schedule.batch_hess = 3;
    schedule.delta = 0.5;
    Rng rng(3);
    for (int i = 0; i < 3; ++i) drsopo_step(state, problem, schedule, rng);
    CHECK(state.theta.norm() == 0.0);
    CHECK(state.t == 3);
  }
  SUBCASE("Rosenbrock run reaches the reference minimizer") {
    auto problem = rosenbrock_problem();
    OptimizerState state = init_state(Eigen::Vector2d(-1.2, 1.0));
    ScheduleConfig schedule;
    schedule.delta = 0.1;
    Rng rng(4);
    double last_min_eig = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < 500; ++i) {
      const TraceRecord rec = drsopo_step(state, problem, schedule, rng);
      if (!std::isnan(rec.min_subspace_eig)) last_min_eig = rec.min_subspace_eig;
    }
    CHECK(problem.exact_gradient(state.theta).norm() <= 1e-3);
    CHECK(problem.exact_value(state.theta) <= 1e-8);

    // gradient-descent reference from the same start settles in the same basin
    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    for (int i = 0; i < 2000000; ++i) {
      const Eigen::VectorXd g = problem.exact_gradient(x);
      if (g.norm() <= 1e-8) break;
      x -= 2e-3 * g;
    }
    CHECK((state.theta - x).norm() <= 1e-2);
    CHECK(last_min_eig >= -1e-10);  // positive curvature at the minimum
  }
  SUBCASE("every update stays inside the radius and the span") {
    const TabularMDP mdp = random_mdp(77, 4, 3, 1.0, 0.9);
    MdpProblem problem(mdp, SoftmaxPolicy(4, 3), 6);
    OptimizerState state = init_state(Eigen::VectorXd::Zero(12));
    ScheduleConfig schedule;
    schedule.batch_grad = 10;
    schedule.batch_hess = 5;
    schedule.delta = 0.3;
    Rng rng(5);
    for (int i = 0; i < 25; ++i) {
      const Eigen::VectorXd before = state.theta;
      StepDiagnostics diag;
      drsopo_step(state, problem, schedule, rng, &diag);
      const Eigen::VectorXd move = state.theta - before;
      CHECK(move.norm() <= schedule.delta * (1.0 + 1e-9));
      // step lies in span{g, d_prev}
      Eigen::MatrixXd basis(12, 2);
      basis.col(0) = diag.g;
      basis.col(1) = diag.d_basis;
      const Eigen::VectorXd residual =
          move - basis * basis.colPivHouseholderQr().solve(move);
      CHECK(residual.norm() <= 1e-10 * std::max(1.0, move.norm()));
      CHECK(diag.solution.predicted_reduction >= 0.0);
    }
  }
}

TEST_CASE("basic DVR-SOPO") {
  SUBCASE("q = 1 is pathwise identical to DR-SOPO") {
    const TabularMDP mdp = random_mdp(42, 3, 2, 1.0, 0.9);
    MdpProblem p1(mdp, SoftmaxPolicy(3, 2), 5);
    MdpProblem p2(mdp, SoftmaxPolicy(3, 2), 5);
    ScheduleConfig schedule;
    schedule.batch_grad = 8;
    schedule.batch_epoch = 8;  // |M_0| = |M_g|
    schedule.batch_hess = 4;
    schedule.epoch_length = 1;
    schedule.delta = 0.4;
    OptimizerState s1 = init_state(Eigen::VectorXd::Zero(6));
    OptimizerState s2 = init_state(Eigen::VectorXd::Zero(6));
    Rng r1(7), r2(7);
    for (int i = 0; i < 15; ++i) {
      drsopo_step(s1, p1, schedule, r1);
      dvrsopo_step(s2, p2, schedule, r2);
      CHECK(s1.theta == s2.theta);  // bitwise
    }
  }
  SUBCASE("frozen parameters keep the recursion constant at zero cost") {
    // constant objective: every gradient is zero, so no step is ever taken
    auto problem = quadratic_problem(Eigen::MatrixXd::Identity(3, 3) * 0.0 +
                                         Eigen::MatrixXd::Identity(3, 3) * 1e-300,
                                     Eigen::VectorXd::Zero(3));
    OptimizerState state = init_state(Eigen::VectorXd::Ones(3));
    ScheduleConfig schedule;
    schedule.epoch_length = 4;
    Rng rng(8);
    dvrsopo_step(state, problem, schedule, rng);  // epoch head
    const Eigen::VectorXd g_after_head = state.g_est;
    for (int i = 0; i < 3; ++i) {
      dvrsopo_step(state, problem, schedule, rng);
      CHECK(state.g_est == g_after_head);  // xi contributes nothing
      CHECK(state.theta == Eigen::VectorXd::Ones(3));
    }
  }
  SUBCASE("exact oracles telescope to the exact gradient at every iterate") {
    const TabularMDP mdp = random_mdp(9, 3, 2, 1.0, 0.9);
    const SoftmaxPolicy policy(3, 2);
    auto problem = exact_mdp_problem(mdp, policy, 4);
    OptimizerState state = init_state(Eigen::VectorXd::Zero(6));
    ScheduleConfig schedule;
    schedule.epoch_length = 6;
    schedule.delta = 0.2;
    Rng rng(9);
    for (int i = 0; i < 12; ++i) {
      dvrsopo_step(state, *problem, schedule, rng);
      const Eigen::VectorXd truth = exact_gradient_dp(mdp, policy, state.theta, 4);
      // g_est is the estimate at the pre-step iterate; recompute there
      const Eigen::VectorXd pre = state.theta - state.last_move;
      const Eigen::VectorXd truth_pre = exact_gradient_dp(mdp, policy, pre, 4);
      CHECK((state.g_est - truth_pre).lpNorm<Eigen::Infinity>() <= 1e-10);
      (void)truth;
    }
  }
}

TEST_CASE("practical variants") {
  SUBCASE("exact quadratic model accepts with ratio one") {
    Eigen::MatrixXd a(2, 2);
    a << 2.0, 0.3, 0.3, 1.0;
    auto problem = quadratic_problem(a, Eigen::VectorXd::Ones(2));
    OptimizerState state = init_state(Eigen::Vector2d(1.5, -0.5));
    PracticalConfig cfg;
    cfg.lambda_init = 1e-8;
    cfg.lambda_min = 1e-12;
    cfg.delta_max = 100.0;
    Rng rng(10);
    const TraceRecord rec = practical_step(state, problem, cfg, PracticalVariant::dr, rng);
    CHECK(rec.accepted);
    CHECK(rec.rho == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("model overprediction is rejected and leaves the state intact") {
    // -x^2/2 + 10 x^4: the quadratic model at x = 0.1 predicts a long
    // downhill step that actually climbs the quartic wall
    auto problem = DeterministicProblem(
        1,
        [](const Eigen::VectorXd& x) {
          return -0.5 * x(0) * x(0) + 10.0 * std::pow(x(0), 4);
        },
        [](const Eigen::VectorXd& x) {
          Eigen::VectorXd g(1);
          g(0) = -x(0) + 40.0 * x(0) * x(0) * x(0);
          return g;
        },
        [](const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
          Eigen::VectorXd hv(1);
          hv(0) = (-1.0 + 120.0 * x(0) * x(0)) * v(0);
          return hv;
        });
    OptimizerState state = init_state(Eigen::VectorXd::Constant(1, 0.1));
    PracticalConfig cfg;
    cfg.delta_max = 10.0;
    Rng rng(11);
    const double lambda_before = cfg.lambda_init;
    const TraceRecord rec = practical_step(state, problem, cfg, PracticalVariant::dr, rng);
    CHECK_FALSE(rec.accepted);
    CHECK(rec.rho < cfg.eta);
    CHECK(state.theta(0) == 0.1);                      // rejection: theta unchanged
    CHECK(state.last_move.norm() == 0.0);              // no movement recorded
    CHECK(state.lambda > lambda_before);               // multiplier increased
    CHECK(state.t == 1);                               // counters still advance
  }
  SUBCASE("coefficient clipping lands exactly on delta_max") {
    // curvature 0.48 and lambda 0.01 give an unclipped coefficient of
    // exactly 2: 1 / (0.48 + 2 * 0.01) = 2, twice the radius
    auto problem = quadratic_problem(Eigen::MatrixXd::Identity(1, 1) * 0.48,
                                     Eigen::VectorXd::Zero(1));
    OptimizerState state = init_state(Eigen::VectorXd::Ones(1));
    PracticalConfig cfg;
    cfg.delta_max = 1.0;
    cfg.lambda_init = 0.01;
    cfg.eta = 1e-9;
    Rng rng(12);
    StepDiagnostics diag;
    practical_step(state, problem, cfg, PracticalVariant::dr, rng, &diag);
    CHECK(diag.solution.alpha.norm() == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("dvr recursion skips sampling after a rejection") {
    // same overprediction instance, dvr pipeline: after the rejected step the
    // next correction sees v = 0 and the gradient estimate stays put
    auto problem = DeterministicProblem(
        1,
        [](const Eigen::VectorXd& x) {
          return -0.5 * x(0) * x(0) + 10.0 * std::pow(x(0), 4);
        },
        [](const Eigen::VectorXd& x) {
          Eigen::VectorXd g(1);
          g(0) = -x(0) + 40.0 * x(0) * x(0) * x(0);
          return g;
        },
        [](const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
          Eigen::VectorXd hv(1);
          hv(0) = (-1.0 + 120.0 * x(0) * x(0)) * v(0);
          return hv;
        });
    OptimizerState state = init_state(Eigen::VectorXd::Constant(1, 0.1));
    PracticalConfig cfg;
    cfg.delta_max = 10.0;
    cfg.epoch_length = 5;
    Rng rng(13);
    practical_step(state, problem, cfg, PracticalVariant::dvr, rng);  // epoch head, rejected
    const Eigen::VectorXd g_head = state.g_est;
    CHECK(state.last_move.norm() == 0.0);
    practical_step(state, problem, cfg, PracticalVariant::dvr, rng);  // recursion, xi = 0
    CHECK(state.g_est == g_head);
  }
}

TEST_CASE("full-dimension trust region steps") {
  SUBCASE("convex quadratic converges in a few exact CG steps") {
    Eigen::MatrixXd a(6, 6);
    a.setZero();
    for (int i = 0; i < 6; ++i) a(i, i) = 1.0 + i;
    a(0, 3) = a(3, 0) = 0.4;
    Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(6, 1.0, 2.0);
    auto problem = quadratic_problem(a, b);
    OptimizerState state = init_state(Eigen::VectorXd::Zero(6));
    ScheduleConfig schedule;
    schedule.delta = 1e6;
    Rng rng(14);
    for (int i = 0; i < 2; ++i) fdtr_step(state, problem, schedule, false, rng);
    CHECK(problem.exact_gradient(state.theta).norm() <= 1e-5 * b.norm());
  }
  SUBCASE("on a 2-parameter problem FDTR and DRTR agree when the span is the plane") {
    Eigen::MatrixXd a(2, 2);
    a << 2.0, 0.4, 0.4, 1.2;
    auto p1 = quadratic_problem(a, Eigen::VectorXd::Ones(2));
    auto p2 = quadratic_problem(a, Eigen::VectorXd::Ones(2));
    OptimizerState s1 = init_state(Eigen::Vector2d(2.0, -1.0));
    s1.d_prev = Eigen::Vector2d(0.3, 0.7);  // span{g, d_prev} = R^2
    OptimizerState s2 = s1;
    ScheduleConfig schedule;
    schedule.delta = 1e5;  // interior solves on both sides
    Rng r1(15), r2(15);
    drsopo_step(s1, p1, schedule, r1);
    fdtr_step(s2, p2, schedule, false, r2);
    CHECK((s1.theta - s2.theta).norm() <= 1e-8);
  }
  SUBCASE("zero gradient takes no step") {
    auto problem = quadratic_problem(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
    OptimizerState state = init_state(Eigen::VectorXd::Zero(3));
    ScheduleConfig schedule;
    Rng rng(16);
    fdtr_step(state, problem, schedule, false, rng);
    CHECK(state.theta.norm() == 0.0);
  }
}

TEST_CASE("normalized SGD baselines") {
  SUBCASE("REINFORCE normalized step") {
    auto problem = DeterministicProblem(
        3, [](const Eigen::VectorXd&) { return 0.0; },
        [](const Eigen::VectorXd&) {
          Eigen::VectorXd g(3);
          g << 3.0, 4.0, 0.0;
          return g;
        },
        [](const Eigen::VectorXd&, const Eigen::VectorXd& v) { return v; });
    OptimizerState state = init_state(Eigen::VectorXd::Zero(3));
    SgdConfig cfg;
    cfg.learning_rate = 0.01;
    Rng rng(17);
    reinforce_step(state, problem, cfg, rng);
    CHECK(state.theta(0) == doctest::Approx(-0.006).epsilon(1e-12));
    CHECK(state.theta(1) == doctest::Approx(-0.008).epsilon(1e-12));
    CHECK(state.theta(2) == doctest::Approx(0.0));

    SgdConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    const Eigen::VectorXd before = state.theta;
    reinforce_step(state, problem, frozen, rng);
    CHECK(state.theta == before);
  }
  SUBCASE("zero gradient leaves the parameters in place") {
    const TabularMDP mdp = zero_reward_mdp();
    MdpProblem problem(mdp, SoftmaxPolicy(3, 2), 4);
    OptimizerState state = init_state(Eigen::VectorXd::Zero(6));
    SgdConfig cfg;
    cfg.batch_grad = 4;
    Rng rng(18);
    reinforce_step(state, problem, cfg, rng);
    CHECK(state.theta.norm() == 0.0);
  }
  SUBCASE("both baselines improve the return on a small MDP") {
    const TabularMDP mdp = random_mdp(3, 3, 2, 1.0, 0.9);
    const int horizon = 3;
    for (const bool hapg : {false, true}) {
      MdpProblem problem(mdp, SoftmaxPolicy(3, 2), horizon);
      OptimizerState state = init_state(Eigen::VectorXd::Zero(6));
      SgdConfig cfg;
      cfg.batch_grad = 20;
      cfg.batch_havr = 5;
      cfg.epoch_length = 10;
      Rng rng(19);
      std::vector<double> window_means;
      double window_sum = 0.0;
      int window_n = 0;
      for (int i = 0; i < 2000; ++i) {
        const TraceRecord rec = hapg ? hapg_step(state, problem, cfg, rng)
                                     : reinforce_step(state, problem, cfg, rng);
        if (!std::isnan(rec.mean_return)) {
          window_sum += rec.mean_return;
          ++window_n;
        }
        if ((i + 1) % 100 == 0) {
          window_means.push_back(window_sum / window_n);
          window_sum = 0.0;
          window_n = 0;
        }
      }
      const double initial = -exact_objective(mdp, SoftmaxPolicy(3, 2),
                                              Eigen::VectorXd::Zero(6), horizon);
      const double final_window = window_means.back();
      INFO("hapg=", hapg, " initial=", initial, " final=", final_window);
      CHECK(final_window > initial);
      // trend over 100-iteration windows: the second half beats the first
      double first_half = 0.0, second_half = 0.0;
      for (std::size_t k = 0; k < window_means.size(); ++k)
        (k < window_means.size() / 2 ? first_half : second_half) += window_means[k];
      CHECK(second_half / (window_means.size() - window_means.size() / 2) >
            first_half / (window_means.size() / 2));
    }
  }
}

TEST_CASE("strict saddle escape with subspace curvature certificate") {
  auto problem = saddle_problem();
  OptimizerState state = init_state(Eigen::Vector2d(0.01, 1.0));
  ScheduleConfig schedule;
  schedule.delta = 0.1;
  Rng rng(20);
  double last_min_eig = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < 2000; ++i) {
    const TraceRecord rec = drsopo_step(state, problem, schedule, rng);
    if (!std::isnan(rec.min_subspace_eig)) last_min_eig = rec.min_subspace_eig;
    if (rec.grad_norm_estimate <= 1e-9) break;
  }
  CHECK(problem.exact_gradient(state.theta).norm() <= 1e-3);
  CHECK(std::abs(std::abs(state.theta(0)) - 1.0) <= 1e-6);  // reached a minimum, not the saddle
  CHECK(last_min_eig >= -1e-2);
}

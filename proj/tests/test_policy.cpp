#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sopo/policy.hpp"
#include "sopo/rng.hpp"

using namespace sopo;

namespace {

// central finite difference of f along coordinate i
template <typename F>
double fd_partial(const F& f, Eigen::VectorXd theta, Eigen::Index i, double h = 1e-6) {
  const double base = theta(i);
  theta(i) = base + h;
  const double fp = f(theta);
  theta(i) = base - h;
  const double fm = f(theta);
  return (fp - fm) / (2.0 * h);
}

}  // namespace

TEST_CASE("softmax log-prob and sampling") {
  const SoftmaxPolicy policy(3, 4);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(12);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 4; ++a)
      CHECK(policy.log_prob(zero, s, a) == doctest::Approx(-std::log(4.0)).epsilon(1e-14));

  SUBCASE("dominant logit captures essentially all samples") {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(12);
    theta(1 * 4 + 2) = 50.0;
    Rng rng(12);
    for (int i = 0; i < 100000; ++i) CHECK(policy.sample_action(theta, 1, rng) == 2);
  }
  SUBCASE("sampling matches the density at uniform parameters") {
    Rng rng(13);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts(policy.sample_action(zero, 0, rng)) += 1.0;
    for (int a = 0; a < 4; ++a) {
      const double expected = n * 0.25;
      CHECK(std::abs(counts(a) - expected) <= 4.0 * std::sqrt(expected * 0.75));
    }
  }
}

TEST_CASE("softmax score") {
  const SoftmaxPolicy policy(2, 2);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd s0 = policy.score(zero, 0, 0);
  CHECK(s0(0) == doctest::Approx(0.5));
  CHECK(s0(1) == doctest::Approx(-0.5));
  CHECK(s0(2) == doctest::Approx(0.0));
  CHECK(s0(3) == doctest::Approx(0.0));

  SUBCASE("score identity: the probability-weighted score sums to zero") {
    Rng rng(21);
    const SoftmaxPolicy p53(5, 3);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd theta(15);
      for (Eigen::Index i = 0; i < 15; ++i) theta(i) = 2.0 * rng.normal();
      for (int s = 0; s < 5; ++s) {
        const Eigen::VectorXd probs = p53.action_probs(theta, s);
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(15);
        for (int a = 0; a < 3; ++a) p53.add_score(theta, s, a, probs(a), sum);
        CHECK(sum.lpNorm<Eigen::Infinity>() <= 1e-12);
      }
    }
  }
  SUBCASE("matches finite differences of the log density") {
    Rng rng(22);
    const SoftmaxPolicy p(4, 3);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd theta(12);
      for (Eigen::Index i = 0; i < 12; ++i) theta(i) = rng.normal();
      const int s = static_cast<int>(rng.uniform() * 4);
      const int a = static_cast<int>(rng.uniform() * 3);
      const Eigen::VectorXd score = p.score(theta, s, a);
      for (Eigen::Index i = 0; i < 12; ++i) {
        const double fd = fd_partial(
            [&](const Eigen::VectorXd& th) { return p.log_prob(th, s, a); }, theta, i);
        CHECK(std::abs(score(i) - fd) <= 1e-7);
      }
    }
  }
}

TEST_CASE("softmax score Hessian action") {
  const SoftmaxPolicy policy(1, 2);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd v(2);
  v << 1.0, -1.0;
  const Eigen::VectorXd hv = policy.score_hvp(zero, 0, 0, v);
  CHECK(hv(0) == doctest::Approx(-0.5));
  CHECK(hv(1) == doctest::Approx(0.5));
  CHECK(policy.score_hvp(zero, 0, 0, Eigen::VectorXd::Zero(2)).norm() == doctest::Approx(0.0));

  SUBCASE("matches directional finite differences of the score") {
    Rng rng(23);
    const SoftmaxPolicy p(3, 3);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd theta(9), dir(9);
      for (Eigen::Index i = 0; i < 9; ++i) {
        theta(i) = rng.normal();
        dir(i) = rng.normal();
      }
      const int s = static_cast<int>(rng.uniform() * 3);
      const int a = static_cast<int>(rng.uniform() * 3);
      const double h = 1e-6;
      const Eigen::VectorXd fd =
          (p.score(theta + h * dir, s, a) - p.score(theta - h * dir, s, a)) / (2.0 * h);
      CHECK((p.score_hvp(theta, s, a, dir) - fd).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
  }
  SUBCASE("Fisher identity per state") {
    Rng rng(24);
    const SoftmaxPolicy p(2, 4);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd theta(8);
      for (Eigen::Index i = 0; i < 8; ++i) theta(i) = rng.normal();
      for (int s = 0; s < 2; ++s) {
        const Eigen::VectorXd probs = p.action_probs(theta, s);
        Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(8, 8);
        Eigen::MatrixXd neg_hess = Eigen::MatrixXd::Zero(8, 8);
        for (int a = 0; a < 4; ++a) {
          const Eigen::VectorXd sc = p.score(theta, s, a);
          fisher += probs(a) * sc * sc.transpose();
          neg_hess -= probs(a) * p.score_hessian_dense(theta, s, a);
        }
        CHECK((fisher - neg_hess).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("softmax constants are valid bounds") {
  const SoftmaxPolicy policy(2, 5);
  const PolicyConstants pc = policy_constants(policy);
  CHECK(pc.score_bound == doctest::Approx(std::sqrt(2.0)));
  CHECK(pc.hessian_bound == doctest::Approx(0.5));

  Rng rng(25);
  double max_score = 0.0;
  double max_eig = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd theta(10);
    for (Eigen::Index i = 0; i < 10; ++i) theta(i) = 6.0 * rng.normal();
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 5; ++a)
        max_score = std::max(max_score, policy.score(theta, s, a).norm());
      const Eigen::MatrixXd h = policy.score_hessian_dense(theta, s, 0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
      max_eig = std::max(max_eig, es.eigenvalues().cwiseAbs().maxCoeff());
    }
  }
  CHECK(max_score <= pc.score_bound + 1e-12);
  CHECK(max_eig <= pc.hessian_bound + 1e-12);
}

TEST_CASE("linear-Gaussian policy") {
  const LinearGaussianPolicy policy(3, 2);  // one-hot features, 2D actions
  REQUIRE(policy.param_dim() == 8);
  Rng rng(26);
  Eigen::VectorXd theta(8);
  for (Eigen::Index i = 0; i < 8; ++i) theta(i) = 0.5 * rng.normal();

  SUBCASE("log-prob matches the closed-form normal density") {
    for (int trial = 0; trial < 50; ++trial) {
      const int s = static_cast<int>(rng.uniform() * 3);
      Eigen::VectorXd a(2);
      a << rng.normal(), rng.normal();
      const Eigen::VectorXd m = policy.mean(theta, s);
      const Eigen::VectorXd sd = policy.stddev(theta);
      double expected = 0.0;
      for (int j = 0; j < 2; ++j)
        expected += -0.5 * std::log(2.0 * M_PI) - std::log(sd(j)) -
                    0.5 * std::pow((a(j) - m(j)) / sd(j), 2);
      CHECK(policy.log_prob(theta, s, a) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  SUBCASE("score and score-Hessian match finite differences") {
    for (int trial = 0; trial < 50; ++trial) {
      const int s = static_cast<int>(rng.uniform() * 3);
      Eigen::VectorXd a(2), dir(8);
      a << rng.normal(), rng.normal();
      for (Eigen::Index i = 0; i < 8; ++i) dir(i) = rng.normal();
      const Eigen::VectorXd score = policy.score(theta, s, a);
      for (Eigen::Index i = 0; i < 8; ++i) {
        const double fd = fd_partial(
            [&](const Eigen::VectorXd& th) { return policy.log_prob(th, s, a); }, theta, i);
        CHECK(std::abs(score(i) - fd) <= 1e-7);
      }
      const double h = 1e-6;
      const Eigen::VectorXd fd_dir =
          (policy.score(theta + h * dir, s, a) - policy.score(theta - h * dir, s, a)) / (2.0 * h);
      CHECK((policy.score_hvp(theta, s, a, dir) - fd_dir).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
  }
  SUBCASE("sampling matches the density moments") {
    const int s = 1;
    const Eigen::VectorXd m = policy.mean(theta, s);
    const Eigen::VectorXd sd = policy.stddev(theta);
    const int n = 100000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    Eigen::Vector2d sum_sq = Eigen::Vector2d::Zero();
    Rng sampler(27);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd a = policy.sample_action(theta, s, sampler);
      sum += a;
      sum_sq += a.cwiseProduct(a);
    }
    for (int j = 0; j < 2; ++j) {
      const double mean_j = sum(j) / n;
      const double var_j = sum_sq(j) / n - mean_j * mean_j;
      CHECK(std::abs(mean_j - m(j)) <= 4.0 * sd(j) / std::sqrt(static_cast<double>(n)));
      CHECK(var_j == doctest::Approx(sd(j) * sd(j)).epsilon(0.05));
    }
  }
  SUBCASE("no closed-form constants") {
    CHECK_THROWS_AS(policy_constants(policy), Unsupported);
  }
}

TEST_CASE("parameter serialization round trip") {
  namespace fs = std::filesystem;
  Rng rng(28);
  Eigen::VectorXd theta(6);
  for (Eigen::Index i = 0; i < 6; ++i) theta(i) = rng.normal();
  const fs::path path = fs::temp_directory_path() / "sopo_params_test.txt";
  save_params(path.string(), "tabular-softmax", theta);
  const auto [kind, loaded] = load_params(path.string());
  CHECK(kind == "tabular-softmax");
  CHECK((loaded - theta).lpNorm<Eigen::Infinity>() == 0.0);
  fs::remove(path);
}

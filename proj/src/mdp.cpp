#include "sopo/mdp.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sopo/policy.hpp"

namespace sopo {

namespace {

constexpr long kDpBudget = 10'000;   // max n_states * n_actions for DP oracles
constexpr int kHessianDimCap = 200;
constexpr double kFdStep = 1e-5;

void check_dp_budget(const TabularMDP& mdp) {
  if (static_cast<long>(mdp.n_states) * mdp.n_actions > kDpBudget)
    throw TooLarge("DP oracle budget exceeded: " + std::to_string(mdp.n_states) + " x " +
                   std::to_string(mdp.n_actions));
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw std::runtime_error("mdp: empty state or action space");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::runtime_error("mdp: gamma must be in [0, 1)");
  if (!(reward_bound > 0.0)) throw std::runtime_error("mdp: reward bound must be positive");
  if (static_cast<int>(transition.size()) != n_states)
    throw std::runtime_error("mdp: transition tensor has wrong state count");
  for (int s = 0; s < n_states; ++s) {
    const auto& rows = transition[s];
    if (rows.rows() != n_actions || rows.cols() != n_states)
      throw std::runtime_error("mdp: transition block shape mismatch at state " +
                               std::to_string(s));
    for (int a = 0; a < n_actions; ++a) {
      if ((rows.row(a).array() < 0.0).any())
        throw std::runtime_error("mdp: negative transition probability at state " +
                                 std::to_string(s));
      if (std::abs(rows.row(a).sum() - 1.0) > 1e-12)
        throw std::runtime_error("mdp: transition row does not sum to 1 at (s=" +
                                 std::to_string(s) + ", a=" + std::to_string(a) + ")");
    }
  }
  if (reward.rows() != n_states || reward.cols() != n_actions)
    throw std::runtime_error("mdp: reward table shape mismatch");
  if (reward.array().abs().maxCoeff() > reward_bound + 1e-12)
    throw std::runtime_error("mdp: reward exceeds the stated bound");
  if (initial_dist.size() != n_states || (initial_dist.array() < 0.0).any() ||
      std::abs(initial_dist.sum() - 1.0) > 1e-12)
    throw std::runtime_error("mdp: initial distribution is not a probability vector");
}

TabularMDP random_mdp(std::uint64_t seed, int n_states, int n_actions, double reward_bound,
                      double gamma) {
  Rng rng(seed);
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.reward_bound = reward_bound;
  mdp.transition.resize(n_states);
  for (int s = 0; s < n_states; ++s) {
    mdp.transition[s].resize(n_actions, n_states);
    for (int a = 0; a < n_actions; ++a) {
      // Dirichlet(1) row as normalized Exponential(1) draws
      for (int t = 0; t < n_states; ++t) mdp.transition[s](a, t) = rng.exponential();
      mdp.transition[s].row(a) /= mdp.transition[s].row(a).sum();
    }
  }
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      mdp.reward(s, a) = rng.uniform(-reward_bound, reward_bound);
  mdp.initial_dist.resize(n_states);
  for (int s = 0; s < n_states; ++s) mdp.initial_dist(s) = rng.exponential();
  mdp.initial_dist /= mdp.initial_dist.sum();
  mdp.validate();
  return mdp;
}

void save_mdp(const std::string& path, const TabularMDP& mdp, int horizon) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << mdp.n_states << " " << mdp.n_actions << " " << horizon << " " << mdp.gamma << " "
      << mdp.reward_bound << "\n";
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      out << "P " << s << " " << a;
      for (int t = 0; t < mdp.n_states; ++t) out << " " << mdp.transition[s](a, t);
      out << "\n";
    }
  for (int s = 0; s < mdp.n_states; ++s) {
    out << "r " << s;
    for (int a = 0; a < mdp.n_actions; ++a) out << " " << mdp.reward(s, a);
    out << "\n";
  }
  out << "rho";
  for (int s = 0; s < mdp.n_states; ++s) out << " " << mdp.initial_dist(s);
  out << "\n";
}

MdpFixture load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  MdpFixture fx;
  TabularMDP& mdp = fx.mdp;
  if (!(in >> mdp.n_states >> mdp.n_actions >> fx.horizon >> mdp.gamma >> mdp.reward_bound))
    throw std::runtime_error(path + ": bad fixture header, expected 'S A H gamma R'");
  if (mdp.n_states < 1 || mdp.n_actions < 1 || fx.horizon < 1)
    throw std::runtime_error(path + ": nonpositive sizes in header");
  mdp.transition.assign(mdp.n_states, Eigen::MatrixXd::Zero(mdp.n_actions, mdp.n_states));
  mdp.reward.setZero(mdp.n_states, mdp.n_actions);
  mdp.initial_dist.setZero(mdp.n_states);
  std::string tag;
  for (long k = 0; k < static_cast<long>(mdp.n_states) * mdp.n_actions; ++k) {
    int s = 0, a = 0;
    if (!(in >> tag >> s >> a) || tag != "P")
      throw std::runtime_error(path + ": expected a 'P s a' row");
    if (s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions)
      throw std::runtime_error(path + ": transition row index out of range");
    for (int t = 0; t < mdp.n_states; ++t)
      if (!(in >> mdp.transition[s](a, t)))
        throw std::runtime_error(path + ": truncated transition row");
  }
  for (int k = 0; k < mdp.n_states; ++k) {
    int s = 0;
    if (!(in >> tag >> s) || tag != "r") throw std::runtime_error(path + ": expected an 'r s' row");
    if (s < 0 || s >= mdp.n_states) throw std::runtime_error(path + ": reward row out of range");
    for (int a = 0; a < mdp.n_actions; ++a)
      if (!(in >> mdp.reward(s, a))) throw std::runtime_error(path + ": truncated reward row");
  }
  if (!(in >> tag) || tag != "rho") throw std::runtime_error(path + ": expected the 'rho' row");
  for (int s = 0; s < mdp.n_states; ++s)
    if (!(in >> mdp.initial_dist(s))) throw std::runtime_error(path + ": truncated rho row");
  mdp.validate();
  return fx;
}

Trajectory sample_trajectory(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                             const Eigen::VectorXd& theta, int horizon, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("sample_trajectory: horizon must be >= 1");
  Trajectory traj;
  traj.states.reserve(horizon);
  traj.actions.reserve(horizon);
  traj.rewards.reserve(horizon);
  int s = rng.categorical(std::span<const double>(mdp.initial_dist.data(),
                                                  static_cast<std::size_t>(mdp.n_states)));
  for (int h = 0; h < horizon; ++h) {
    const int a = policy.sample_action(theta, s, rng);
    traj.states.push_back(s);
    traj.actions.push_back(a);
    traj.rewards.push_back(mdp.reward(s, a));
    if (h + 1 < horizon) {
      const Eigen::VectorXd row = mdp.transition[s].row(a);
      s = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
  }
  return traj;
}

double truncated_return(const Trajectory& traj, double gamma) {
  double sum = 0.0;
  double disc = 1.0;
  for (const double r : traj.rewards) {
    sum += disc * r;
    disc *= gamma;
  }
  return sum;
}

std::vector<Eigen::VectorXd> state_marginals(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                             const Eigen::VectorXd& theta, int horizon) {
  check_dp_budget(mdp);
  std::vector<Eigen::VectorXd> mu;
  mu.reserve(horizon);
  mu.push_back(mdp.initial_dist);
  for (int h = 1; h < horizon; ++h) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mu.back()(s) == 0.0) continue;
      const Eigen::VectorXd p = policy.action_probs(theta, s);
      for (int a = 0; a < mdp.n_actions; ++a)
        next += mu.back()(s) * p(a) * mdp.transition[s].row(a).transpose();
    }
    mu.push_back(std::move(next));
  }
  return mu;
}

double exact_objective(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                       const Eigen::VectorXd& theta, int horizon) {
  const auto mu = state_marginals(mdp, policy, theta, horizon);
  double j = 0.0;
  double disc = 1.0;
  for (int h = 0; h < horizon; ++h) {
    double step_cost = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mu[h](s) == 0.0) continue;
      step_cost += mu[h](s) * policy.action_probs(theta, s).dot(mdp.reward.row(s));
    }
    j += disc * step_cost;
    disc *= mdp.gamma;
  }
  return j;
}

Eigen::VectorXd exact_gradient_fd(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                  const Eigen::VectorXd& theta, int horizon) {
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + kFdStep;
    const double jp = exact_objective(mdp, policy, probe, horizon);
    probe(i) = theta(i) - kFdStep;
    const double jm = exact_objective(mdp, policy, probe, horizon);
    probe(i) = theta(i);
    grad(i) = (jp - jm) / (2.0 * kFdStep);
  }
  return grad;
}

Eigen::VectorXd exact_gradient_dp(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                  const Eigen::VectorXd& theta, int horizon) {
  check_dp_budget(mdp);
  const Eigen::Index d = theta.size();
  // forward sensitivities: mu_h(s) and D_h(s) = grad_theta mu_h(s)
  Eigen::VectorXd mu = mdp.initial_dist;
  Eigen::MatrixXd dmu = Eigen::MatrixXd::Zero(d, mdp.n_states);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
  double disc = 1.0;
  for (int h = 0; h < horizon; ++h) {
    Eigen::VectorXd mu_next = Eigen::VectorXd::Zero(mdp.n_states);
    Eigen::MatrixXd dmu_next = Eigen::MatrixXd::Zero(d, mdp.n_states);
    const bool last = (h + 1 == horizon);
    for (int s = 0; s < mdp.n_states; ++s) {
      const Eigen::VectorXd p = policy.action_probs(theta, s);
      const double r_bar = p.dot(mdp.reward.row(s));
      // grad of E[r | s] through the policy at s
      Eigen::VectorXd dr = Eigen::VectorXd::Zero(d);
      for (int a = 0; a < mdp.n_actions; ++a)
        policy.add_score(theta, s, a, p(a) * mdp.reward(s, a), dr);
      grad += disc * (mu(s) * dr + r_bar * dmu.col(s));
      if (last) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        Eigen::VectorXd flow = dmu.col(s) * p(a);
        policy.add_score(theta, s, a, mu(s) * p(a), flow);
        for (int t = 0; t < mdp.n_states; ++t) {
          const double pr = mdp.transition[s](a, t);
          if (pr == 0.0) continue;
          mu_next(t) += mu(s) * p(a) * pr;
          dmu_next.col(t) += pr * flow;
        }
      }
    }
    if (!last) {
      mu.swap(mu_next);
      dmu.swap(dmu_next);
      disc *= mdp.gamma;
    }
  }
  return grad;
}

Eigen::MatrixXd exact_hessian_fd(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                                 const Eigen::VectorXd& theta, int horizon) {
  if (theta.size() > kHessianDimCap)
    throw TooLarge("Hessian oracle limited to dimension " + std::to_string(kHessianDimCap));
  const Eigen::Index d = theta.size();
  Eigen::MatrixXd hess(d, d);
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < d; ++i) {
    probe(i) = theta(i) + kFdStep;
    const Eigen::VectorXd gp = exact_gradient_dp(mdp, policy, probe, horizon);
    probe(i) = theta(i) - kFdStep;
    const Eigen::VectorXd gm = exact_gradient_dp(mdp, policy, probe, horizon);
    probe(i) = theta(i);
    hess.col(i) = (gp - gm) / (2.0 * kFdStep);
  }
  return 0.5 * (hess + hess.transpose()).eval();
}

long count_trajectories(const TabularMDP& mdp, int horizon) {
  // n_states * n_actions * (n_actions * n_states)^(horizon-1), saturated
  double count = static_cast<double>(mdp.n_states) * mdp.n_actions;
  for (int h = 1; h < horizon; ++h) {
    count *= static_cast<double>(mdp.n_states) * mdp.n_actions;
    if (count > 1e18) return std::numeric_limits<long>::max();
  }
  return static_cast<long>(count);
}

void for_each_trajectory(const TabularMDP& mdp, const SoftmaxPolicy& policy,
                         const Eigen::VectorXd& theta, int horizon,
                         const std::function<void(const Trajectory&, double)>& visit,
                         long max_paths) {
  if (count_trajectories(mdp, horizon) > max_paths)
    throw TooLarge("trajectory enumeration exceeds " + std::to_string(max_paths) + " paths");
  std::vector<Eigen::VectorXd> probs(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) probs[s] = policy.action_probs(theta, s);

  Trajectory traj;
  traj.states.resize(horizon);
  traj.actions.resize(horizon);
  traj.rewards.resize(horizon);

  // depth-first over (s_0, a_0, ..., s_{H-1}, a_{H-1})
  const std::function<void(int, int, double)> expand = [&](int h, int s, double prob) {
    if (prob == 0.0) return;
    traj.states[h] = s;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = prob * probs[s](a);
      if (pa == 0.0) continue;
      traj.actions[h] = a;
      traj.rewards[h] = mdp.reward(s, a);
      if (h + 1 == horizon) {
        visit(traj, pa);
      } else {
        for (int t = 0; t < mdp.n_states; ++t) expand(h + 1, t, pa * mdp.transition[s](a, t));
      }
    }
  };
  for (int s = 0; s < mdp.n_states; ++s) expand(0, s, mdp.initial_dist(s));
}

TruncationBounds truncation_bounds(double reward_bound, double gamma, int horizon,
                                   double score_bound, double hessian_bound) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("truncation_bounds: gamma");
  if (horizon < 1) throw std::invalid_argument("truncation_bounds: horizon");
  const double R = reward_bound;
  const double G = score_bound;
  const double L = hessian_bound;
  const double om = 1.0 - gamma;
  const double gh = std::pow(gamma, horizon);
  const double H = static_cast<double>(horizon);
  TruncationBounds b;
  b.value_bound = R / om * gh;
  b.grad_bound = G * R / om * std::sqrt(1.0 / om + H) * gh;
  const double poly4 = 24.0 / std::pow(om, 4) + 24.0 * H / std::pow(om, 3) +
                       12.0 * H * H / (om * om) + 4.0 * H * H * H / om + std::pow(H, 4);
  const double poly2 = 2.0 / (om * om) + 2.0 * H / om + H * H;
  b.hess_bound = (R * G * G / om * std::sqrt(poly4) + R * L / om * std::sqrt(poly2)) * gh;
  return b;
}

}  // namespace sopo

#include "sopo/policy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sopo {

namespace {

void check_state_action(int state, int n_states, int action, int n_actions) {
  if (state < 0 || state >= n_states) throw std::invalid_argument("state out of range");
  if (action < 0 || action >= n_actions) throw std::invalid_argument("action out of range");
}

}  // namespace

Eigen::VectorXd SoftmaxPolicy::action_probs(const Eigen::VectorXd& theta, int state) const {
  check_state_action(state, n_states_, 0, 1);
  const auto logits = theta.segment(static_cast<Eigen::Index>(state) * n_actions_, n_actions_);
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  p /= p.sum();
  return p;
}

double SoftmaxPolicy::log_prob(const Eigen::VectorXd& theta, int state, int action) const {
  check_state_action(state, n_states_, action, n_actions_);
  const auto logits = theta.segment(static_cast<Eigen::Index>(state) * n_actions_, n_actions_);
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits(action) - lse;
}

int SoftmaxPolicy::sample_action(const Eigen::VectorXd& theta, int state, Rng& rng) const {
  const Eigen::VectorXd p = action_probs(theta, state);
  return rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

Eigen::VectorXd SoftmaxPolicy::score(const Eigen::VectorXd& theta, int state, int action) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(param_dim());
  add_score(theta, state, action, 1.0, out);
  return out;
}

void SoftmaxPolicy::add_score(const Eigen::VectorXd& theta, int state, int action, double weight,
                              Eigen::VectorXd& acc) const {
  check_state_action(state, n_states_, action, n_actions_);
  const Eigen::VectorXd p = action_probs(theta, state);
  const Eigen::Index off = static_cast<Eigen::Index>(state) * n_actions_;
  acc.segment(off, n_actions_) -= weight * p;
  acc(off + action) += weight;
}

Eigen::VectorXd SoftmaxPolicy::score_hvp(const Eigen::VectorXd& theta, int state, int action,
                                         const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(param_dim());
  add_score_hvp(theta, state, action, v, 1.0, out);
  return out;
}

void SoftmaxPolicy::add_score_hvp(const Eigen::VectorXd& theta, int state, int action,
                                  const Eigen::VectorXd& v, double weight,
                                  Eigen::VectorXd& acc) const {
  check_state_action(state, n_states_, action, n_actions_);
  (void)action;  // the softmax log-prob Hessian does not depend on the action
  const Eigen::VectorXd p = action_probs(theta, state);
  const Eigen::Index off = static_cast<Eigen::Index>(state) * n_actions_;
  const auto v_s = v.segment(off, n_actions_);
  const double pv = p.dot(v_s);
  // -(diag(p) - p p^T) v_s
  acc.segment(off, n_actions_) -= weight * (p.array() * (v_s.array() - pv)).matrix();
}

Eigen::MatrixXd SoftmaxPolicy::score_hessian_dense(const Eigen::VectorXd& theta, int state,
                                                   int action) const {
  check_state_action(state, n_states_, action, n_actions_);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(param_dim(), param_dim());
  const Eigen::VectorXd p = action_probs(theta, state);
  const Eigen::Index off = static_cast<Eigen::Index>(state) * n_actions_;
  h.block(off, off, n_actions_, n_actions_) =
      -(Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose());
  return h;
}

PolicyConstants policy_constants(const SoftmaxPolicy&) {
  // ||e_a - pi||^2 = (1-pi_a)^2 + sum_{b!=a} pi_b^2 <= 2, and the spectral
  // norm of diag(pi) - pi pi^T over the simplex is at most 1/2.
  return {std::sqrt(2.0), 0.5};
}

LinearGaussianPolicy::LinearGaussianPolicy(int n_states, int action_dim)
    : LinearGaussianPolicy(
          [n_states](int s) {
            Eigen::VectorXd phi = Eigen::VectorXd::Zero(n_states);
            phi(s) = 1.0;
            return phi;
          },
          n_states, action_dim) {}

LinearGaussianPolicy::LinearGaussianPolicy(FeatureMap features, int n_features, int action_dim)
    : features_(std::move(features)), n_features_(n_features), action_dim_(action_dim) {
  if (n_features < 1 || action_dim < 1)
    throw std::invalid_argument("LinearGaussianPolicy: empty feature or action space");
}

Eigen::VectorXd LinearGaussianPolicy::mean(const Eigen::VectorXd& theta, int state) const {
  const Eigen::VectorXd phi = features_(state);
  Eigen::VectorXd m(action_dim_);
  for (int j = 0; j < action_dim_; ++j)
    m(j) = theta.segment(static_cast<Eigen::Index>(j) * n_features_, n_features_).dot(phi);
  return m;
}

Eigen::VectorXd LinearGaussianPolicy::stddev(const Eigen::VectorXd& theta) const {
  return theta.tail(action_dim_).array().exp();
}

double LinearGaussianPolicy::log_prob(const Eigen::VectorXd& theta, int state,
                                      const Eigen::VectorXd& action) const {
  const Eigen::VectorXd m = mean(theta, state);
  const Eigen::VectorXd log_std = theta.tail(action_dim_);
  double lp = -0.5 * action_dim_ * std::log(2.0 * M_PI);
  for (int j = 0; j < action_dim_; ++j) {
    const double z = (action(j) - m(j)) * std::exp(-log_std(j));
    lp += -0.5 * z * z - log_std(j);
  }
  return lp;
}

Eigen::VectorXd LinearGaussianPolicy::sample_action(const Eigen::VectorXd& theta, int state,
                                                    Rng& rng) const {
  const Eigen::VectorXd m = mean(theta, state);
  const Eigen::VectorXd sd = stddev(theta);
  Eigen::VectorXd a(action_dim_);
  for (int j = 0; j < action_dim_; ++j) a(j) = m(j) + sd(j) * rng.normal();
  return a;
}

Eigen::VectorXd LinearGaussianPolicy::score(const Eigen::VectorXd& theta, int state,
                                            const Eigen::VectorXd& action) const {
  const Eigen::VectorXd phi = features_(state);
  const Eigen::VectorXd m = mean(theta, state);
  const Eigen::VectorXd log_std = theta.tail(action_dim_);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(param_dim());
  for (int j = 0; j < action_dim_; ++j) {
    const double inv_var = std::exp(-2.0 * log_std(j));
    const double resid = action(j) - m(j);
    g.segment(static_cast<Eigen::Index>(j) * n_features_, n_features_) = inv_var * resid * phi;
    g(static_cast<Eigen::Index>(action_dim_) * n_features_ + j) = inv_var * resid * resid - 1.0;
  }
  return g;
}

Eigen::VectorXd LinearGaussianPolicy::score_hvp(const Eigen::VectorXd& theta, int state,
                                                const Eigen::VectorXd& action,
                                                const Eigen::VectorXd& v) const {
  const Eigen::VectorXd phi = features_(state);
  const Eigen::VectorXd m = mean(theta, state);
  const Eigen::VectorXd log_std = theta.tail(action_dim_);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(param_dim());
  const Eigen::Index ls_off = static_cast<Eigen::Index>(action_dim_) * n_features_;
  for (int j = 0; j < action_dim_; ++j) {
    const double inv_var = std::exp(-2.0 * log_std(j));
    const double resid = action(j) - m(j);
    const Eigen::Index w_off = static_cast<Eigen::Index>(j) * n_features_;
    const auto v_w = v.segment(w_off, n_features_);
    const double v_ls = v(ls_off + j);
    const double phi_vw = phi.dot(v_w);
    // W_j block: -inv_var * phi phi^T; W_j x log_std_j: -2 inv_var resid phi
    out.segment(w_off, n_features_) = -inv_var * phi_vw * phi - 2.0 * inv_var * resid * v_ls * phi;
    // log_std_j row: symmetric cross term and -2 inv_var resid^2 diagonal
    out(ls_off + j) = -2.0 * inv_var * resid * phi_vw - 2.0 * inv_var * resid * resid * v_ls;
  }
  return out;
}

PolicyConstants policy_constants(const LinearGaussianPolicy&) {
  throw Unsupported("policy_constants: the Gaussian score is unbounded; supply G and L");
}

void save_params(const std::string& path, const std::string& kind, const Eigen::VectorXd& theta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << kind << " " << theta.size() << "\n";
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << theta(i) << "\n";
}

std::pair<std::string, Eigen::VectorXd> load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string kind;
  Eigen::Index d = 0;
  if (!(in >> kind >> d) || d < 0) throw std::runtime_error("bad parameter header in " + path);
  Eigen::VectorXd theta(d);
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(in >> theta(i))) throw std::runtime_error("truncated parameter file " + path);
  return {kind, theta};
}

}  // namespace sopo

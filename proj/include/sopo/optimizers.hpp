#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sopo/problem.hpp"
#include "sopo/schedule.hpp"
#include "sopo/trust_region.hpp"

namespace sopo {

struct OptimizerState {
  Eigen::VectorXd theta;
  Eigen::VectorXd d_prev;     // last accepted direction, spans the subspace with g
  Eigen::VectorXd last_move;  // theta_t - theta_{t-1}; zero at t=0 and after a rejection
  Eigen::VectorXd g_est;      // current gradient estimate (recursion state for VR variants)
  long t = 0;
  long epoch_pos = 0;         // t mod q
  double lambda = 0.0;        // radius-free regularizer (practical variants)
  double delta = 0.1;         // trust radius (basic variants)
  long cumulative_env_steps = 0;
};

OptimizerState init_state(const Eigen::VectorXd& theta0);

// One row per iteration. mean_return is the negated cost (higher is better);
// fields that an algorithm does not produce are NaN.
struct TraceRecord {
  long t = 0;
  long env_steps = 0;
  double mean_return = std::numeric_limits<double>::quiet_NaN();
  double grad_norm_estimate = std::numeric_limits<double>::quiet_NaN();
  double exact_grad_norm = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
  bool accepted = true;
  double min_subspace_eig = std::numeric_limits<double>::quiet_NaN();
};

// "t,env_steps,mean_return,grad_norm,exact_grad_norm,lambda,rho,accepted,min_eig"
void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> read_trace_csv(const std::string& path);

struct PracticalConfig {
  double delta_max = 2.0;
  double eta = 0.001;           // acceptance threshold on the reduction ratio
  long epoch_length = 5;        // q
  long batch_grad = 50;         // |M_g|
  long batch_hess = 10;         // |M_H|
  long batch_epoch = 50;        // |M_0|
  long batch_havr = 10;         // |M^_g|
  double lambda_init = 0.01;
  // symmetric damping: with a noisy ratio test the accept/reject decision is
  // close to a coin flip whenever the predicted reduction falls below the
  // value-estimate noise, and any up/down asymmetry then ratchets lambda to
  // overflow. A rejection at the cap recycles lambda to lambda_init: steps
  // at the cap are too small for the return measurement to resolve, so the
  // test carries no signal there and the multiplier must be able to recover.
  double lambda_inc = 2.0;      // multiplier on rejection
  double lambda_dec = 2.0;      // divisor on acceptance
  double lambda_min = 1e-8;
  double lambda_max = 1e4;
};

struct SgdConfig {
  double learning_rate = 0.01;
  long batch_grad = 50;   // REINFORCE batch / HAPG |M_0|
  long batch_havr = 10;   // HAPG |M^_g|
  long epoch_length = 10; // HAPG q
};

enum class PracticalVariant { dr, dvr };

// Step internals exposed for KKT cross-checks and the oracle suite.
struct StepDiagnostics {
  bool solved = false;
  bool used_1d_fallback = false;
  TwoDimModel model;
  TRSolution solution;
  Eigen::VectorXd g;
  Eigen::VectorXd d_basis;  // the d_t entering the subspace
  Eigen::VectorXd step;
  double delta_used = 0.0;  // radius of the solve (may be halved on retry)
  std::shared_ptr<HvpOperator> hvp;
};

// Basic dimension-reduced step at fixed radius: fresh gradient batch, fresh
// Hessian batch, DRTR solve in span{g_t, d_t}, unconditional update.
TraceRecord drsopo_step(OptimizerState& state, Problem& problem, const ScheduleConfig& schedule,
                        Rng& rng, StepDiagnostics* diag = nullptr);

// Variance-reduced gradient recursion: full batch every q-th iteration,
// Hessian-aided correction otherwise; the rest matches drsopo_step.
TraceRecord dvrsopo_step(OptimizerState& state, Problem& problem, const ScheduleConfig& schedule,
                         Rng& rng, StepDiagnostics* diag = nullptr);

// Radius-free step with multiplier damping and ratio-test acceptance.
TraceRecord practical_step(OptimizerState& state, Problem& problem, const PracticalConfig& cfg,
                           PracticalVariant variant, Rng& rng, StepDiagnostics* diag = nullptr);

// Full-dimension trust-region step via Steihaug CG on the batch Hessian
// action; gradient pipeline is plain or variance-reduced per the flag.
TraceRecord fdtr_step(OptimizerState& state, Problem& problem, const ScheduleConfig& schedule,
                      bool variance_reduced, Rng& rng);

// Normalized stochastic gradient baselines.
TraceRecord reinforce_step(OptimizerState& state, Problem& problem, const SgdConfig& cfg,
                           Rng& rng);
TraceRecord hapg_step(OptimizerState& state, Problem& problem, const SgdConfig& cfg, Rng& rng);

}  // namespace sopo

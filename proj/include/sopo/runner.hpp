#pragma once

#include <string>
#include <vector>

#include "sopo/config.hpp"
#include "sopo/optimizers.hpp"

namespace sopo {

struct RunResult {
  std::vector<TraceRecord> trace;
  Eigen::VectorXd final_theta;
  long final_t = 0;
  long final_env_steps = 0;
};

// One seeded optimization run; the t=0 record carries the initial policy's
// exact value when the instance is DP-sized.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t run_seed);

// mean +- std of the return across repeats on a fixed env-step grid.
struct SummaryRow {
  double env_steps = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  int n = 0;
};
std::vector<SummaryRow> summarize(const std::vector<std::vector<TraceRecord>>& traces,
                                  double max_env_steps, int grid_points = 101);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

// Serialized parameters plus the iteration/env-step counters.
void save_checkpoint(const std::string& path, const Eigen::VectorXd& theta, long t,
                     long env_steps);

// Runs cfg.repeats seeded repeats, writing run<k>_trace.csv, run<k>_theta.txt
// and summary.csv under cfg.out_dir. Returns the per-run traces.
std::vector<std::vector<TraceRecord>> run_experiment(const ExperimentConfig& cfg);

}  // namespace sopo

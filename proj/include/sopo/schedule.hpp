#pragma once

#include <stdexcept>
#include <string>

#include "sopo/estimators.hpp"

namespace sopo {

struct EpsilonTooLarge : std::runtime_error {
  explicit EpsilonTooLarge(const std::string& what) : std::runtime_error(what) {}
};

enum class ScheduleVariant { dr, dvr, fdtr, fdtr_vr };

ScheduleVariant schedule_variant_from_string(const std::string& name);

// Theory-driven parameters. Counts are the analysis formulas rounded up;
// Delta = 2 sqrt(eps) / M.
struct ScheduleConfig {
  double epsilon = 0.0;
  long batch_grad = 1;   // |M_g|
  long batch_hess = 1;   // |M_H|
  long batch_epoch = 1;  // |M_0|   (variance-reduced variants)
  long batch_havr = 1;   // |M^_g|  (variance-reduced variants)
  long epoch_length = 1; // q
  long iterations = 1;   // T
  double delta = 0.1;

  // exact per-run totals and the asymptotic complexity expression
  double total_samples = 0.0;
  double complexity_samples = 0.0;
};

// Batch sizes, epoch length, iteration count and radius for target accuracy
// epsilon and parameter dimension d. Throws EpsilonTooLarge for the
// variance-reduced variants when epsilon > G_H^2 / 4.
ScheduleConfig theory_schedule(const TheoryConstants& constants, double epsilon, long d,
                               ScheduleVariant variant, double delta_j = 1.0);

}  // namespace sopo

#include "sopo/schedule.hpp"

#include <cmath>

namespace sopo {

ScheduleVariant schedule_variant_from_string(const std::string& name) {
  if (name == "dr") return ScheduleVariant::dr;
  if (name == "dvr") return ScheduleVariant::dvr;
  if (name == "fdtr") return ScheduleVariant::fdtr;
  if (name == "fdtr-vr") return ScheduleVariant::fdtr_vr;
  throw std::invalid_argument("unknown schedule variant '" + name + "'");
}

ScheduleConfig theory_schedule(const TheoryConstants& constants, double epsilon, long d,
                               ScheduleVariant variant, double delta_j) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("theory_schedule: epsilon must be positive");
  if (d < 1) throw std::invalid_argument("theory_schedule: dimension must be >= 1");
  const double gg = constants.grad_moment_bound();
  const double gh = constants.hess_moment_bound();
  const double m = constants.hess_lipschitz;
  const bool vr = variant == ScheduleVariant::dvr || variant == ScheduleVariant::fdtr_vr;
  if (vr && epsilon > gh * gh / 4.0)
    throw EpsilonTooLarge("variance-reduced schedule needs epsilon <= G_H^2/4 = " +
                          std::to_string(gh * gh / 4.0));

  const auto count = [](double x) { return std::max(1L, static_cast<long>(std::ceil(x))); };

  ScheduleConfig cfg;
  cfg.epsilon = epsilon;
  cfg.batch_grad = count(144.0 * gg * gg / (epsilon * epsilon));
  cfg.batch_hess = count(22.0 * 24.0 * 24.0 * gh * gh * std::log(static_cast<double>(d)) / epsilon);
  cfg.iterations = count(24.0 * m * m * delta_j / std::pow(epsilon, 1.5));
  cfg.delta = 2.0 * std::sqrt(epsilon) / m;
  if (vr) {
    cfg.epoch_length = count(1.0 / (8.0 * std::sqrt(epsilon)));
    cfg.batch_havr = count(288.0 * gh * gh / (m * m * std::pow(epsilon, 1.5)));
    cfg.batch_epoch = count(288.0 * gg * gg / (epsilon * epsilon));
    // exact total: a full refresh every q iterations, corrections otherwise
    const double t = static_cast<double>(cfg.iterations);
    const double q = static_cast<double>(cfg.epoch_length);
    const double refreshes = std::ceil(t / q);
    cfg.total_samples = refreshes * static_cast<double>(cfg.batch_epoch) +
                        (t - refreshes) * static_cast<double>(cfg.batch_havr) +
                        t * static_cast<double>(cfg.batch_hess);
    cfg.complexity_samples =
        delta_j * (8.0 * m * m * gg * gg + gh * gh) / std::pow(epsilon, 3.0) +
        delta_j * m * m * gh * gh * std::log(static_cast<double>(d)) / std::pow(epsilon, 2.5);
  } else {
    const double t = static_cast<double>(cfg.iterations);
    cfg.total_samples =
        t * (static_cast<double>(cfg.batch_grad) + static_cast<double>(cfg.batch_hess));
    cfg.complexity_samples = delta_j * m * m * gg * gg / std::pow(epsilon, 3.5) +
                            delta_j * m * m * gh * gh / std::pow(epsilon, 2.5);
  }
  return cfg;
}

}  // namespace sopo

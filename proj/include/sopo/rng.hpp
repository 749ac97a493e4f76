#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace sopo {

// Seeded random stream. Every scalar draw is derived from mt19937_64 output
// bits directly (no std distributions), so a given seed produces the same
// sequence on every platform and every build.
//
// spawn() derives an independent child stream from (root seed, child index).
// Batch samplers give each trajectory its own spawned stream, which keeps
// results reproducible no matter how the batch is scheduled across workers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_(seed), engine_(mix(seed, 0x9e3779b97f4a7c15ull)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Marsaglia polar rejection.
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Index drawn from an (unnormalized is not allowed) probability vector.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty support");
    const double u = uniform();
    double cdf = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      cdf += probs[i];
      if (u < cdf) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Exponential(1), used for Dirichlet draws.
  double exponential() {
    double u;
    do { u = uniform(); } while (u <= 0.0);
    return -std::log1p(-u);
  }

  // Child stream number `spawned_count` of this stream's root.
  Rng spawn() { return Rng(mix(root_, ++spawned_)); }

  // Deterministic stream for an externally chosen index (e.g. repeat id).
  Rng stream(std::uint64_t index) const { return Rng(mix(root_, 0xd1b54a32d192ed03ull + index)); }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined word
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t root_;
  std::uint64_t spawned_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace sopo

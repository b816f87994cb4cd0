#pragma once

#include <cstdint>
#include <random>

#include "cdid/normal.hpp"

namespace cdid {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a well-separated engine seed for stream `index` of a master seed.
// Parallel workers draw from per-index streams, so results cannot depend on
// scheduling or on how replications are partitioned across threads.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master + 0x9e3779b97f4a7c15ULL * (index + 1));
}

// mt19937_64 with hand-rolled transforms. The engine's output sequence is
// pinned by the standard and the transforms below avoid the
// implementation-defined std:: distributions, so draws are identical across
// platforms and toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Standard normal via inverse CDF (portable, no Box-Muller state).
  double normal() {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return norm_quantile(u);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  // Geometric number of days >= 1 with per-day stop probability `hazard`.
  int geometric_days(double hazard) {
    if (hazard >= 1.0) return 1;
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return 1 + static_cast<int>(std::log(u) / std::log1p(-hazard));
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cdid

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace hazsmooth {

// Counter-based generator in the SplitMix64 family.  Each (seed, stream)
// pair yields an independent sequence, so parallel simulation replicates
// can draw from disjoint streams and still be reproducible regardless of
// scheduling.  The sampling helpers below are written out explicitly
// because the distributions in <random> are implementation-defined and
// would break cross-platform reproducibility of seeded runs.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(seed ^ 0x5851f42d4c957f2dULL) ^ mix(stream * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Uniform draw on [0, 1) with 53 random bits.
template <class Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Rng>
double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Unit-rate exponential via inversion; -log1p(-u) is exact near u = 0.
template <class Rng>
double exponential1(Rng& rng) {
  return -std::log1p(-uniform01(rng));
}

// Box-Muller without caching: every call consumes exactly two uniforms,
// which keeps draw counts deterministic across call sites.
template <class Rng>
double standard_normal(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace hazsmooth

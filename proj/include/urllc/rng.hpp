#pragma once

// Deterministic counter-based random streams.
//
// Every Monte Carlo trial draws from its own stream keyed by (seed, stream
// index), so results are independent of worker count and scheduling order.
// The generator and the variate transforms are written out in full rather
// than taken from <random> because the standard distributions are
// implementation-defined: two libstdc++ versions may disagree, and record
// files must be byte-identical across rebuilds.

#include <cstdint>
#include <cmath>

namespace urllc {

// splitmix64: 64-bit state advanced by the golden-ratio increment.  Passes
// standard statistical batteries and guarantees full period per stream.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    // Two mixing rounds separate (seed, stream) pairs that differ in one bit.
    state_ = mix(seed ^ mix(stream * 0x9E3779B97F4A7C15ull));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform on [0, 1): top 53 bits, the exact double grid.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the pair partner is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    have_spare_ = true;
    spare_ = r * std::sin(2.0 * M_PI * u2);
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace urllc

#pragma once

#include <cstdint>
#include <random>

namespace lorentz {

/// Deterministic random stream keyed by (seed, chunk). Chunks are fixed work units,
/// so results never depend on how chunks are spread over workers.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t chunk) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
    engine_.seed(seq);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw exact and platform independent.
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return x % n;
  }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lorentz

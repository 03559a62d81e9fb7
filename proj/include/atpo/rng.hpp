#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace atpo {

/// Counter-based random stream: a stateless hash of (key, counter), so any
/// (seed, stream-id) pair yields the same sequence regardless of how many
/// other streams were consumed in between. All draws are pure integer and
/// double arithmetic, identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kGolden)) {}

  /// Substream keyed by up to three ids (prompt, rollout, step, ...).
  Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0)
      : key_(mix(mix(mix(mix(seed ^ kGolden) ^ a) ^ b) ^ c)) {}

  std::uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  /// Uniform in [0, 1), 53 bits of randomness.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n >= 1.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    // guard against log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Draw an index from unnormalized non-negative weights, walking the CDF in
  /// index order (deterministic tie handling).
  std::size_t next_categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  // SplitMix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace atpo

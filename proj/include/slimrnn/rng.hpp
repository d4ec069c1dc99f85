// SPDX-License-Identifier: Apache-2.0
//
// Counter-based SplitMix64 streams. Draw k of a stream is a pure function of
// (key, k), so a stream can be resumed from its position alone.
#pragma once

#include <cstdint>
#include <string_view>

namespace slimrnn {

inline constexpr std::string_view kRngAlgorithm = "splitmix64-counter/v1";

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Fixed offsets that derive independent streams from one experiment seed.
enum class SeedStream : std::uint64_t {
  Init = 1,
  Task = 2,
  Validation = 3,
  Shuffle = 4,
  GradCheck = 5,
};

class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t position = 0)
      : key_(key), position_(position) {}

  /// Stream `stream` of the experiment seeded with `seed`.
  static constexpr CounterRng derive(std::uint64_t seed, SeedStream stream) {
    return CounterRng(splitmix64_mix(seed ^ splitmix64_mix(static_cast<std::uint64_t>(stream) * kGolden)));
  }

  /// Sub-stream `index` of this stream's key (e.g. one per minibatch).
  constexpr CounterRng substream(std::uint64_t index) const {
    return CounterRng(splitmix64_mix(key_ ^ splitmix64_mix((index + 1) * kGolden)));
  }

  constexpr std::uint64_t next_u64() {
    ++position_;
    return splitmix64_mix(key_ + position_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). Bound must be positive.
  constexpr std::uint64_t below(std::uint64_t bound) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t position() const { return position_; }

 private:
  std::uint64_t key_;
  std::uint64_t position_;
};

}  // namespace slimrnn

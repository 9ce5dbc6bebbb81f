#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace mvtlab {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream families. Every random quantity in the library is drawn from a
/// stream addressed by (seed, family, index), so results never depend on the
/// order in which rows, replicates or bootstrap draws are processed.
enum class StreamFamily : std::uint64_t {
  rows = 1,
  potential_indicators = 2,
  bootstrap = 3,
  replicate = 4,
  battery = 5,
  two_wave_rows = 6,
  composite_noise = 7,
  study = 8,
};

/// Derives an independent 64-bit seed for sub-experiment `index`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, StreamFamily family,
                                    std::uint64_t index) noexcept {
  std::uint64_t s = mix64(seed + 0x9e3779b97f4a7c15ULL);
  s = mix64(s ^ (static_cast<std::uint64_t>(family) * 0xd1b54a32d192ed03ULL));
  return mix64(s ^ (index + 0x632be59bd9b4e019ULL));
}

/// Counter-based generator (SplitMix64 sequence) for one addressed
/// substream. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(std::uint64_t seed, StreamFamily family, std::uint64_t index) noexcept
      : state_(derive_seed(seed, family, index)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  double normal() { return normal_(*this); }

  /// Uniform integer on [0, n).
  std::size_t below(std::size_t n) noexcept {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  /// Index drawn from a probability vector (assumed to sum to 1).
  std::size_t categorical(std::span<const double> probs) noexcept {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // rounding slack: return the last index with positive mass
    for (std::size_t i = probs.size(); i-- > 0;)
      if (probs[i] > 0.0) return i;
    return 0;
  }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_{};
};

}  // namespace mvtlab

#pragma once

#include <cstdint>
#include <limits>

namespace volfilter {

/// Counter-based generator (SplitMix64 output function over a keyed
/// counter). Every (seed, stream, index) triple gets its own independent
/// stream, so results do not depend on how work is split across threads.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) : state_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream key from a user seed and up to three indices.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  std::uint64_t h = Rng::mix(seed + 0x632be59bd9b4e019ULL);
  h = Rng::mix(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = Rng::mix(h ^ (b + 0xd1b54a32d192ed03ULL));
  h = Rng::mix(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

// Stream tags used across modules.
namespace stream {
inline constexpr std::uint64_t kChain = 1;
inline constexpr std::uint64_t kArrivals = 2;
inline constexpr std::uint64_t kIncrements = 3;
inline constexpr std::uint64_t kTablePaths = 4;
inline constexpr std::uint64_t kParticleInit = 5;
inline constexpr std::uint64_t kParticleMove = 6;
inline constexpr std::uint64_t kResample = 7;
}  // namespace stream

}  // namespace volfilter

#pragma once

#include <cstdint>

namespace drnet {

// SplitMix64. Used for every random draw in the project (parameter init,
// scene synthesis, shuffles) so that results are bit-reproducible across
// platforms. Algorithm: state advances by the 64-bit golden-ratio constant;
// the output mix is (z ^= z>>30) * 0xBF58476D1CE4E5B9,
// (z ^= z>>27) * 0x94D049BB133111EB, z ^ z>>31.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }

 private:
  std::uint64_t state_;
};

}  // namespace drnet

#pragma once

// Counter-based random number generation (Philox4x32-10).
//
// Every draw is a pure function of (seed, stream, position), so experiment
// substreams can be replayed independently and reproduced bit-for-bit by any
// other Philox4x32-10 implementation (the algorithm of Salmon, Moraes, Dror
// and Shaw, "Parallel random numbers: as easy as 1, 2, 3", SC'11).
//
// Layout used here: the 64-bit key holds the seed, the high two counter words
// hold the stream id, and the low two words count 128-bit blocks within the
// stream. Doubles take 53 bits from two consecutive 32-bit lanes.

#include "ot/common.hpp"

#include <array>
#include <cstdint>

namespace ot {

/// One 4x32 Philox block with 10 rounds.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
    ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
           std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
  }
  return ctr;
}

/// Sequential view of one Philox stream.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        stream_hi_{std::uint32_t(stream), std::uint32_t(stream >> 32)} {}

  std::uint32_t next32() {
    if (have_ == 0) {
      buf_ = philox4x32({std::uint32_t(block_), std::uint32_t(block_ >> 32),
                         stream_hi_[0], stream_hi_[1]},
                        key_);
      ++block_;
      have_ = 4;
    }
    return buf_[4 - have_--];
  }

  std::uint64_t next64() {
    const std::uint64_t hi = next32();
    return (hi << 32) | next32();
  }

  /// Uniform draw in [0, 1) with 53 random bits.
  double uniform() { return double(next64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Index draw proportional to the (nonnegative) weights.
  Index categorical(const Vector& w) {
    const double u = uniform() * w.sum();
    double acc = 0.0;
    for (Index k = 0; k < w.size(); ++k) {
      acc += w[k];
      if (u < acc) return k;
    }
    return w.size() - 1;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_hi_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int have_ = 0;
};

}  // namespace ot

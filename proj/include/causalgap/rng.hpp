#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace causalgap {

// Philox4x32-10 counter-based generator.
//
// A stream is identified by (seed, domain, index): the 64-bit seed is the
// key, and the upper two counter words carry (index, domain). The lower two
// counter words walk through blocks of four outputs. Two streams that differ
// in any of the three coordinates never share a counter, so draws for unit i
// do not depend on how many draws were made for unit j.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;
  using result_type = std::uint32_t;

  static Block bijection(Block counter, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * counter[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * counter[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
    }
    return counter;
  }

  Philox4x32(std::uint64_t seed, std::uint32_t domain, std::uint32_t index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        counter_{0, 0, index, domain} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      buffer_ = bijection(counter_, key_);
      if (++counter_[0] == 0) ++counter_[1];
      pos_ = 0;
    }
    return buffer_[pos_++];
  }

  // Uniform double on [0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 5;
    const std::uint64_t lo = (*this)() >> 6;
    return static_cast<double>(hi * 67108864u + lo) * 0x1.0p-53;
  }

  // Uniform integer on [0, bound) from one 32-bit word per accepted draw
  // (multiply-shift with rejection), bound > 0.
  std::uint32_t below32(std::uint32_t bound) {
    std::uint64_t m = std::uint64_t{(*this)()} * bound;
    auto low = static_cast<std::uint32_t>(m);
    if (low < bound) {
      const std::uint32_t floor = static_cast<std::uint32_t>(-bound) % bound;
      while (low < floor) {
        m = std::uint64_t{(*this)()} * bound;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  // Uniform integer on [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
      const std::uint64_t x = (std::uint64_t{(*this)()} << 32) | (*this)();
      if (x < limit) return x % bound;
    }
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  Key key_;
  Block counter_;
  Block buffer_{};
  int pos_ = 4;
};

// Stream domains. Every consumer of randomness draws from its own domain.
namespace stream {
inline constexpr std::uint32_t kCovariates = 1;
inline constexpr std::uint32_t kTreatment = 2;
inline constexpr std::uint32_t kOutcome = 3;
inline constexpr std::uint32_t kFolds = 4;
inline constexpr std::uint32_t kTree = 5;
inline constexpr std::uint32_t kProfile = 6;
}  // namespace stream

}  // namespace causalgap

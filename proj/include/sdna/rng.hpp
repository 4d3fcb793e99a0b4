#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace sdna {

// Counter-based pseudorandom stream: the k-th output is a fixed integer hash
// of (key, k), so sequences are reproducible across platforms and streams can
// be split without sharing state. Equivalent to SplitMix64 with random access.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(finalize(seed + 0x6a09e667f3bcc909ULL * (stream + 1))),
        counter_(0) {}

  std::uint64_t next_u64() {
    return finalize(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on {0, ..., bound-1}, unbiased via rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % bound;
  }

  // Standard normal via Box-Muller on the counter stream.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = next_unit();
    } while (u1 <= 0.0);
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Independent child stream; the parent is unaffected.
  RngStream split(std::uint64_t child) const {
    return RngStream(finalize(key_ ^ finalize(child + 0xd1b54a32d192ed03ULL)));
  }

 private:
  static constexpr std::uint64_t finalize(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sdna

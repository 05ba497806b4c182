#pragma once

// Platform-stable random streams. std::normal_distribution and friends are
// implementation-defined, so every draw that ends up in an artifact goes
// through these helpers instead.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace fvlink {

// PCG64: 128-bit LCG state, XSL-RR output permutation (O'Neill's
// pcg_setseq_128_xsl_rr_64), seeded with pcg64_srandom semantics.
class Pcg64 {
 public:
  using uint128 = unsigned __int128;

  explicit Pcg64(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL) {
    state_ = 0;
    inc_ = (static_cast<uint128>(stream) << 1u) | 1u;
    step();
    state_ += static_cast<uint128>(seed);
    step();
  }

  std::uint64_t next_u64() {
    step();
    const auto hi = static_cast<std::uint64_t>(state_ >> 64u);
    const auto lo = static_cast<std::uint64_t>(state_);
    const auto rot = static_cast<unsigned>(state_ >> 122u);
    const std::uint64_t x = hi ^ lo;
    return (x >> rot) | (x << ((64u - rot) & 63u));
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, bound) by rejection, no modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via the Box-Muller transform. Values come in pairs; the
  // second of each pair is cached and returned by the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr uint128 kMultiplier =
      (static_cast<uint128>(0x2360ed051fc65da4ULL) << 64u) | static_cast<uint128>(0x4385df649fccf645ULL);

  void step() { state_ = state_ * kMultiplier + inc_; }

  uint128 state_;
  uint128 inc_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// First k entries of a seeded partial Fisher-Yates over [0, n).
inline std::vector<std::size_t> sample_without_replacement(Pcg64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(k, n));
  return idx;
}

}  // namespace fvlink

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <type_traits>

namespace sswe {

/// Counter-based generator: Philox4x32-10 (Salmon et al., SC'11).
///
/// The 64-bit seed is the Philox key. The 128-bit counter is split into a
/// 64-bit stream id and a 64-bit block index, so independent streams can be
/// derived from (seed, a, b) without advancing anything sequentially.
class Rng {
 public:
  using Block = std::array<std::uint32_t, 4>;

  struct State {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t position = 0;  // number of 32-bit words consumed
  };

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : state_{seed, stream, 0} {}
  explicit Rng(const State& state) : state_(state) {}

  const State& state() const { return state_; }
  std::uint64_t seed() const { return state_.seed; }

  /// A fresh generator on a stream determined by (this stream, a, b).
  Rng derive(std::uint64_t a, std::uint64_t b = 0) const {
    std::uint64_t s = splitmix64(state_.stream ^ 0x6a09e667f3bcc909ULL);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ (b + 0x3c6ef372fe94f82bULL));
    return Rng(state_.seed, s);
  }

  std::uint32_t next_u32() {
    const std::uint64_t word = state_.position++;
    if (!cached_ || cached_block_ != word / 4 || cached_stream_ != state_.stream) {
      cached_block_ = word / 4;
      cached_stream_ = state_.stream;
      buffer_ = philox(counter_for(cached_block_), key());
      cached_ = true;
    }
    return buffer_[word % 4];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform in [0, 1) with the full mantissa of the requested type.
  template <typename Scalar>
  Scalar uniform01() {
    if constexpr (std::is_same_v<Scalar, float>) {
      return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f;
    } else {
      return static_cast<Scalar>(next_u64() >> 11) * static_cast<Scalar>(0x1.0p-53);
    }
  }

  /// Uniform in [lo, hi).
  template <typename Scalar>
  Scalar uniform(Scalar lo, Scalar hi) {
    if (!(lo < hi)) throw std::invalid_argument("Rng::uniform: requires lo < hi");
    Scalar value = lo + (hi - lo) * uniform01<Scalar>();
    if (value >= hi) value = std::nextafter(hi, lo);
    return value;
  }

  /// Integer uniform in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform01<double>() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform01<double>();  // (0, 1]
    const double u2 = uniform01<double>();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  static Block philox(Block ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += w0;
      key[1] += w1;
    }
    return ctr;
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::array<std::uint32_t, 2> key() const {
    return {static_cast<std::uint32_t>(state_.seed), static_cast<std::uint32_t>(state_.seed >> 32)};
  }
  Block counter_for(std::uint64_t block) const {
    return {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
            static_cast<std::uint32_t>(state_.stream), static_cast<std::uint32_t>(state_.stream >> 32)};
  }

  State state_;
  Block buffer_{};
  std::uint64_t cached_block_ = 0;
  std::uint64_t cached_stream_ = 0;
  bool cached_ = false;
};

}  // namespace sswe

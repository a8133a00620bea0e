#pragma once

// Counter-based random substreams.
//
// Every stochastic routine derives its generator from a key tuple such as
// (seed, realization) or (seed, replication, realization). The state of a
// stream is a pure function of its key, so results do not depend on the
// order in which realizations are evaluated or on the number of workers.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

namespace resamplekit {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// xoshiro256** seeded from a hashed key tuple.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed) : Stream(seed, {}) {}

  Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(seed ^ 0x5265'7361'6d70'6c65ULL);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    for (auto& word : state_) {
      h = splitmix64(h);
      word = h;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on {0, ..., n-1}; n must be positive.
  std::size_t index(std::size_t n) noexcept {
    const std::uint64_t bound = n;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t x = (*this)();
      if (x >= threshold) return static_cast<std::size_t>(x % bound);
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

/// Draws `count` distinct indices from {0, ..., n-1} by a partial Fisher-Yates
/// shuffle, storing them in draw order. Only the displaced positions are
/// tracked, so the cost is O(count^2) independent of n.
inline void draw_distinct(Stream& rng, std::size_t n, std::size_t count,
                          std::span<std::size_t> out) {
  struct Swap {
    std::size_t position;
    std::size_t value;
  };
  if (count == 1) {
    out[0] = rng.index(n);
    return;
  }
  std::vector<Swap> swaps;
  swaps.reserve(count);
  auto value_at = [&](std::size_t pos) {
    for (auto it = swaps.rbegin(); it != swaps.rend(); ++it)
      if (it->position == pos) return it->value;
    return pos;
  };
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(n - i);
    const std::size_t vi = value_at(i);
    const std::size_t vj = value_at(j);
    out[i] = vj;
    swaps.push_back({j, vi});
  }
}

/// Uniform random permutation of {0, ..., n-1}.
inline std::vector<std::size_t> random_permutation(Stream& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(p[i], p[j]);
  }
  return p;
}

}  // namespace resamplekit

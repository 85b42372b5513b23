#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace sa {

namespace detail {

// splitmix64 finalizer; full-period mixer used as a counter hash.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_pair(std::uint64_t key, std::uint64_t ctr) {
  return mix64(key + 0x9e3779b97f4a7c15ull * (ctr + 1));
}

}  // namespace detail

// Derives an independent stream seed; pure function of (seed, stream), so
// replications can be dispatched in any order.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  return detail::hash_pair(detail::mix64(seed ^ 0xa0761d6478bd642full), stream);
}

// Counter-based generator: output i is a hash of (key, i). No hidden state
// beyond the counter, so identical (seed, call sequence) gives identical
// draws on every platform with IEEE doubles.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : key_(detail::mix64(seed ^ 0x8ebc6af09c88c6e3ull)) {}

  Rng split(std::uint64_t stream) const {
    Rng child;
    child.key_ = detail::hash_pair(key_, stream ^ 0x589965cc75374cc3ull);
    child.ctr_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return detail::hash_pair(key_, ctr_++); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; two uniforms per draw, no caching.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n); Lemire multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (-n) % n;
      while (lo < t) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // k distinct indices from {0,..,n-1}, uniform over subsets, by partial
  // Fisher-Yates. Output order is the draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

  std::vector<std::size_t> sample_with_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<std::size_t>(below(n));
    return out;
  }

  // Draw from a finite distribution by CDF inversion; probs need not be
  // perfectly normalized (trailing mass goes to the last index).
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
};

}  // namespace sa

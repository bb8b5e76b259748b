#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "graviton/core/tensor.hpp"

namespace graviton {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// xoshiro256++ with explicit uniform/normal transforms. Deterministic across
/// platforms and standard libraries; every worker and module derives its own
/// stream via sub_seed so streams never alias.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    has_cached_normal_ = false;
    cached_normal_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// integer in [0, n)
  int64_t below(int64_t n) {
    GRAVITON_REQUIRE(n > 0, "Rng::below needs n > 0");
    return static_cast<int64_t>(uniform() * static_cast<double>(n));
  }

  /// standard normal via Box-Muller (pair cached)
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double stddev = 1.0, double mean = 0.0) {
    for (auto& v : t.data) v = static_cast<T>(mean + stddev * normal());
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    for (auto& v : t.data) v = static_cast<T>(uniform(lo, hi));
  }

  /// Fisher-Yates permutation of [0, n)
  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(below(i + 1));
      std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
    }
    return p;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
  bool has_cached_normal_;
  double cached_normal_;
};

/// Derive an independent stream seed from a base seed and a purpose tag.
inline uint64_t sub_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
  uint64_t state = base ^ (fnv1a64(tag) + 0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(state);
}

}  // namespace graviton

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "sscd/tensor.hpp"

namespace sscd {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from one run seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stream derivation: stream(seed, tag, i, j, ...) is independent of sibling
// streams, so per-sample augmentation draws do not depend on batch order.
class StreamKey {
public:
  explicit StreamKey(std::uint64_t seed) : state_(mix64(seed)) {}

  StreamKey with(std::string_view tag) const {
    return StreamKey(mix64(state_ ^ hash_tag(tag)), 0);
  }
  StreamKey with(std::uint64_t n) const {
    return StreamKey(mix64(state_ ^ (n + 0x9e3779b97f4a7c15ULL)), 0);
  }

  Rng rng() const { return Rng(state_); }
  std::uint64_t value() const { return state_; }

private:
  StreamKey(std::uint64_t state, int) : state_(state) {}
  std::uint64_t state_;
};

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  return std::bernoulli_distribution(p)(rng);
}

// Normal draws rejected outside two standard deviations.
inline double truncated_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    double v = dist(rng);
    if (std::abs(v) <= 2.0 * stddev) return v;
  }
}

template <class T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(rng));
}

template <class T>
void fill_truncated_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(truncated_normal(rng, stddev));
}

}  // namespace sscd

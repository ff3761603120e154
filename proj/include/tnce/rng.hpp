#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include "tnce/error.hpp"

namespace tnce {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic random stream. All draws are defined in terms of raw
// mt19937_64 output (no std::*_distribution), so a given seed produces the
// same sequence on every platform we build on. A stream is single-consumer.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1], safe as a log argument
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Box-Muller; always consumes exactly two raw draws.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t uniform_int(std::uint64_t n) {
    require(n > 0, "uniform_int: n must be positive");
    const std::uint64_t threshold = (-n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// Hierarchical seed derivation. Every consumer of randomness receives its own
// named substream so that adding draws to one consumer never shifts the
// sequence seen by another. Substream names used by the experiment runner:
// scene, init, data, augment, dropout, disturb, candidates, validation, eval.
struct RngKey {
  std::uint64_t value = 0;

  RngKey child(std::string_view name) const {
    return RngKey{splitmix64(value ^ fnv1a64(name))};
  }
  RngKey child(std::uint64_t index) const {
    return RngKey{splitmix64(value ^ splitmix64(index + 0x51ed2701u))};
  }
  RngStream stream() const { return RngStream(value); }
};

}  // namespace tnce

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace poembert {

using Rng = std::mt19937_64;

/// Purposes that get their own generator inside one run. A run seeded with
/// `s` draws each purpose from `make_rng(s, purpose)`, so adding draws to one
/// stream never shifts another.
enum class Stream : std::uint64_t {
  Init = 1,
  Data = 2,
  Masking = 3,
  Dropout = 4,
  Split = 5,
  Synthetic = 6,
  GradCheck = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed, Stream purpose) {
  return Rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(purpose))));
}

// The helpers below avoid the std distributions, whose output differs between
// standard library implementations.

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n), unbiased by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

inline double standard_normal(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Normal(0, stddev) resampled until it falls within +-2 stddev.
inline double truncated_normal(Rng& rng, double stddev) {
  double z;
  do {
    z = standard_normal(rng);
  } while (std::abs(z) > 2.0);
  return z * stddev;
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace poembert

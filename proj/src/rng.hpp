#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace biqe {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named sub-stream of a run seed: derive_seed(seed, "mining", {round, node}).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = splitmix64(seed);
  for (unsigned char c : stream) h = splitmix64(h ^ c);
  for (std::uint64_t i : indices) h = splitmix64(h ^ splitmix64(i));
  return h;
}

using Rng = std::mt19937_64;

// Uniform integer in [0, n) by rejection; unlike std::uniform_int_distribution the
// sequence is identical across standard library implementations.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <class It>
void shuffle_range(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace biqe

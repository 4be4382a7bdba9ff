#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace robustcoop {

using Rng = std::mt19937_64;

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a list of indices
/// (cell index, run index, stream tag, ...). Each index is folded in through
/// mix64 so that (1, 2) and (2, 1) give unrelated seeds.
template <typename... Indices>
constexpr std::uint64_t derive_seed(std::uint64_t master, Indices... indices) noexcept {
  std::uint64_t h = mix64(master);
  ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(indices) + 0x632be59bd9b4e019ULL))), ...);
  return h;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Samples an index from a probability row. Mass lost to rounding falls on the
/// last index with nonzero probability.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_nonzero = i;
    if (u < acc) return i;
  }
  return last_nonzero;
}

}  // namespace robustcoop

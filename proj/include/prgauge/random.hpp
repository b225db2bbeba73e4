#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace prgauge {

using Rng = std::mt19937_64;

/// Deterministic substream seed from a base seed and a tuple of stream ids.
/// Parallel tasks derive their generators from this instead of sharing one.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
  // splitmix64 finalizer folded over the ids
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto id : ids) h = mix(h ^ mix(id));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> ids = {}) {
  return Rng(derive_seed(base, ids));
}

}  // namespace prgauge

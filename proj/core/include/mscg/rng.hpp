#pragma once

#include <cstdint>

namespace mscg {

// Counter-based uniform random numbers: every value is a pure function of
// (seed, stream, index), so parallel consumers draw identical numbers
// regardless of scheduling and any sample can be regenerated in isolation.
// The mixer is the 64-bit splitmix finalizer applied to the keyed counter.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t rng_bits(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ stream) ^ index);
}

// Uniform on [0, 1): the top 53 bits of the mixed counter.
inline double rng_u01(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t index) {
  return double(rng_bits(seed, stream, index) >> 11) * 0x1.0p-53;
}

// Uniform on [lo, hi).
inline double rng_uniform(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index, double lo, double hi) {
  return lo + (hi - lo) * rng_u01(seed, stream, index);
}

} // namespace mscg

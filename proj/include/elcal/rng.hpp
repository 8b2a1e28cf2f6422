#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace elcal {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent generator for draw number `counter` of the stream identified by `seed`.
/// Keeps sampled data identical regardless of evaluation order.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t counter) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(counter + 0x632be59bd9b4e019ULL)));
}

}  // namespace elcal

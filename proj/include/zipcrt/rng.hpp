#pragma once

#include <cstdint>
#include <random>

namespace zipcrt {

using Engine = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the independent stream identified by (root, domain, index). The
// result depends only on its arguments, so streams can be created in any
// order or from any thread.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::uint64_t domain,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(mix64(root) ^ domain) + index);
}

inline Engine make_engine(std::uint64_t root, std::uint64_t domain, std::uint64_t index) {
  return Engine(stream_seed(root, domain, index));
}

// Stream domains.
namespace streams {
inline constexpr std::uint64_t allocation = 0xa110c;
inline constexpr std::uint64_t cluster = 0xc1a5;
inline constexpr std::uint64_t replicate = 0x5e91;
} // namespace streams

} // namespace zipcrt

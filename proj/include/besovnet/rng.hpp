#pragma once
#include <cstdint>
#include <random>
#include <string_view>

namespace besovnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// child seed from (seed, key, index); streams never depend on call order
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix64(splitmix64(seed ^ h) + index);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view key, std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(seed, key, index));
}

}  // namespace besovnet

#pragma once

#include <cstdint>
#include <string_view>

namespace renoscan {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Expands one master seed into an independent stream per (stage, a, b).
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t a = 0,
                                           std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stage tag
  for (char ch : stage) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return splitmix64(splitmix64(splitmix64(master ^ h) ^ a) ^ b);
}

}  // namespace renoscan

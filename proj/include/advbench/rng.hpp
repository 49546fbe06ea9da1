#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace advbench {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

/// FNV-1a; stable stream ids for names.
constexpr std::uint64_t name_stream(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace advbench

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spsel {

// Independent generator for a named purpose ("init", "shuffle", "synth", ...)
// derived from one run seed, so adding draws to one stream never shifts another.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed ^ h;  // splitmix64 finalizer
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::seed_seq seq{static_cast<std::uint32_t>(z), static_cast<std::uint32_t>(z >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace spsel

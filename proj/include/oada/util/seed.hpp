#pragma once

#include <cstdint>
#include <string_view>

namespace oada {

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

// Named, indexed sub-stream of a base seed. Streams with different names or
// indices are independent of each other.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ fnv1a(name)) + splitmix64(index + 0x51ed270b27f4a1c3ULL));
}

}  // namespace oada

#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace oada {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

inline void write_f64(std::ostream& out, double v) {
  const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
  out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
}

// False on a short read.
inline bool read_f64(std::istream& in, double& v) {
  std::uint64_t bits = 0;
  if (!in.read(reinterpret_cast<char*>(&bits), sizeof(bits))) return false;
  v = std::bit_cast<double>(to_le(bits));
  return true;
}

}  // namespace oada

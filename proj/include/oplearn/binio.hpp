#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "oplearn/types.hpp"

namespace oplearn {

// Little-endian primitive I/O for the triple-store container format.

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(os, b, 2);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, b, 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}

// Reads exactly n bytes or throws IoError naming how many were missing.
inline void get_bytes(std::istream& is, void* p, std::size_t n,
                      const std::string& what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw IoError("truncated file: " + what + " needs " + std::to_string(n) +
                  " bytes, " +
                  std::to_string(n - static_cast<std::size_t>(is.gcount())) +
                  " missing");
}

inline std::uint16_t get_u16(std::istream& is, const std::string& what) {
  unsigned char b[2];
  get_bytes(is, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  get_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is, const std::string& what) {
  std::uint64_t u = get_u64(is, what);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

// Rank-2 block: u16 rank, u64 dims, f64 payload row-major.
void put_block2(std::ostream& os, const Vec& v, Index rows, Index cols);
Vec get_block2(std::istream& is, Index& rows, Index& cols,
               const std::string& what);

}  // namespace oplearn

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Little-endian primitives shared by the motion and checkpoint formats.
namespace casim::io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline void write_i32(std::ostream& os, std::int32_t v) { write_u32(os, static_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class ReadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::uint32_t read_u32(std::istream& is, const char* field) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ReadError(std::string("truncated field: ") + field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* field) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ReadError(std::string("truncated field: ") + field);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::int32_t read_i32(std::istream& is, const char* field) {
  return static_cast<std::int32_t>(read_u32(is, field));
}

inline double read_f64(std::istream& is, const char* field) {
  return std::bit_cast<double>(read_u64(is, field));
}

inline std::string read_string(std::istream& is, const char* field, std::uint32_t max_len = 1u << 26) {
  const std::uint32_t n = read_u32(is, field);
  if (n > max_len) throw ReadError(std::string("implausible length in field: ") + field);
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw ReadError(std::string("truncated field: ") + field);
  return s;
}

}  // namespace casim::io

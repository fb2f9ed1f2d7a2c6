#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace dslic::detail {

// Shortest round-trip decimal representation. CSV emitters use this so that
// identical runs produce byte-identical files.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(std::int64_t v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace dslic::detail

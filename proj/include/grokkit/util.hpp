#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace grokkit {

/// Shortest decimal text that round-trips `v` exactly.
template <typename T>
std::string format_real(T v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// 64-bit FNV-1a digest; stable across platforms.
inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace grokkit

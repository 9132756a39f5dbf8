#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "vfl/core.hpp"

namespace vfl::binary {

// All persisted formats are little-endian.
template <class T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <class T>
void put(std::ostream& os, T v) {
  const T le = to_little(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof(T));
  if (!os) throw FormatError("write failed");
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T)))
    throw FormatError("unexpected end of file");
  return to_little(v);
}

inline void put_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (got != magic) throw FormatError("bad magic, expected " + std::string(magic));
}

inline void expect_version(std::uint32_t got, std::uint32_t want, std::string_view what) {
  if (got != want)
    throw FormatError(std::string(what) + ": unsupported version " + std::to_string(got));
}

}  // namespace vfl::binary

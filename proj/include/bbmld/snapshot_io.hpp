// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "bbmld/error.hpp"
#include "bbmld/pde.hpp"

namespace bbmld {

// Binary layout, little-endian: f64 t, f64 x_lo, f64 dx, u64 n, then n f64 log u.
namespace detail {
inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw ConfigError("snapshot: truncated file");
  return to_little(v);
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }
}  // namespace detail

inline void write_snapshot(std::ostream& os, const FieldSnapshot& s) {
  detail::put_f64(os, s.t);
  detail::put_f64(os, s.x_lo);
  detail::put_f64(os, s.dx);
  detail::put_u64(os, s.logu.size());
  for (double v : s.logu) detail::put_f64(os, v);
}

inline FieldSnapshot read_snapshot(std::istream& is) {
  FieldSnapshot s;
  s.t = detail::get_f64(is);
  s.x_lo = detail::get_f64(is);
  s.dx = detail::get_f64(is);
  const std::uint64_t n = detail::get_u64(is);
  if (n > (std::uint64_t{1} << 32)) throw ConfigError("snapshot: implausible length");
  s.logu.resize(n);
  for (auto& v : s.logu) v = detail::get_f64(is);
  return s;
}

inline void write_snapshot(const std::string& path, const FieldSnapshot& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  write_snapshot(os, s);
}

inline FieldSnapshot read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  return read_snapshot(is);
}

}  // namespace bbmld

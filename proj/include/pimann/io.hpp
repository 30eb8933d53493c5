#pragma once

// .fvecs / .bvecs / .ivecs: each record is a little-endian int32 dimension
// followed by that many components (float32, uint8 or int32).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "pimann/error.hpp"
#include "pimann/matrix.hpp"

namespace pimann {

enum class VecsKind { f32, u8, i32 };

template <typename T>
constexpr VecsKind vecs_kind_of() {
  if constexpr (std::is_same_v<T, float>) return VecsKind::f32;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return VecsKind::u8;
  else {
    static_assert(std::is_same_v<T, std::int32_t>, "vecs element must be float, uint8 or int32");
    return VecsKind::i32;
  }
}

namespace detail {

inline std::int32_t decode_i32(const unsigned char* b) {
  const std::uint32_t u = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                          (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
  std::int32_t v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void encode_u32(std::uint32_t u, unsigned char* b) {
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
}

template <typename T>
T decode_elem(const unsigned char* b) {
  if constexpr (sizeof(T) == 1) {
    return static_cast<T>(b[0]);
  } else {
    const auto i = decode_i32(b);
    T v;
    std::memcpy(&v, &i, 4);
    return v;
  }
}

}  // namespace detail

/// Streams records from `is`; stops after `max_rows` records when nonzero.
template <typename T>
Matrix<T> read_vecs(std::istream& is, std::size_t max_rows = 0) {
  std::vector<T> data;
  std::size_t dim = 0, rows = 0;
  std::uint64_t offset = 0;
  std::vector<unsigned char> buf;
  while (max_rows == 0 || rows < max_rows) {
    unsigned char head[4];
    is.read(reinterpret_cast<char*>(head), 4);
    const auto got = static_cast<std::size_t>(is.gcount());
    if (got == 0) break;
    if (got < 4)
      fail(errc::format_error, "truncated dimension field of record " + std::to_string(rows) +
                                   " at byte offset " + std::to_string(offset));
    const std::int32_t d = detail::decode_i32(head);
    if (d <= 0)
      fail(errc::format_error, "record " + std::to_string(rows) + " at byte offset " +
                                   std::to_string(offset) + " has dimension " + std::to_string(d));
    if (rows == 0) {
      dim = static_cast<std::size_t>(d);
    } else if (static_cast<std::size_t>(d) != dim) {
      fail(errc::format_error, "record " + std::to_string(rows) + " at byte offset " +
                                   std::to_string(offset) + " has dimension " + std::to_string(d) +
                                   ", expected " + std::to_string(dim));
    }
    buf.resize(dim * sizeof(T));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size())
      fail(errc::format_error, "record " + std::to_string(rows) + " at byte offset " +
                                   std::to_string(offset) + " is truncated");
    for (std::size_t j = 0; j < dim; ++j) data.push_back(detail::decode_elem<T>(buf.data() + j * sizeof(T)));
    offset += 4 + buf.size();
    ++rows;
  }
  return Matrix<T>(rows, dim, std::move(data));
}

template <typename T>
Matrix<T> read_vecs(const std::string& path, std::size_t max_rows = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::format_error, "cannot open " + path);
  try {
    return read_vecs<T>(in, max_rows);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

template <typename T>
void write_vecs(std::ostream& os, const Matrix<T>& m) {
  static_assert(sizeof(T) == 1 || sizeof(T) == 4);
  std::vector<unsigned char> rec(4 + m.dim() * sizeof(T));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    detail::encode_u32(static_cast<std::uint32_t>(m.dim()), rec.data());
    auto row = m.row(i);
    for (std::size_t j = 0; j < m.dim(); ++j) {
      unsigned char* p = rec.data() + 4 + j * sizeof(T);
      if constexpr (sizeof(T) == 1) {
        p[0] = static_cast<unsigned char>(row[j]);
      } else {
        std::uint32_t u;
        std::memcpy(&u, &row[j], 4);
        detail::encode_u32(u, p);
      }
    }
    os.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
}

template <typename T>
void write_vecs(const std::string& path, const Matrix<T>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::format_error, "cannot write " + path);
  write_vecs(out, m);
}

/// Any of the three layouts as float rows, chosen by file extension.
inline Dataset read_dataset(const std::string& path, std::size_t max_rows = 0) {
  auto ends_with = [&](const char* s) {
    const std::size_t n = std::strlen(s);
    return path.size() >= n && path.compare(path.size() - n, n, s) == 0;
  };
  if (ends_with(".fvecs")) return read_vecs<float>(path, max_rows);
  if (ends_with(".bvecs")) return to_dataset(read_vecs<std::uint8_t>(path, max_rows));
  if (ends_with(".ivecs")) return to_dataset(read_vecs<std::int32_t>(path, max_rows));
  fail(errc::format_error, path + ": unknown extension (expected .fvecs, .bvecs or .ivecs)");
}

}  // namespace pimann

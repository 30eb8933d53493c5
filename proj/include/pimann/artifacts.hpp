#pragma once

// Persisted intermediates of a run.
//
// index.bin (little-endian):
//   "PIMIDX01", u32 D, u32 |C|, u32 M, u32 kstar, u8 residual flag,
//   |C| x D f32 centroids, M x kstar x dsub f32 codewords,
//   per cluster: u32 n, n x u32 ids, n x M u8 codes.
// cooccur.bin: "PIMCOC01", u32 |C|, then per cluster a re-encoded cluster
//   record (see write_reencoded_cluster).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pimann/cooccur.hpp"
#include "pimann/core_index.hpp"
#include "pimann/error.hpp"

namespace pimann {

namespace detail {

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline float get_f32(std::istream& is) {
  const std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& what) {
  char buf[8] = {};
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0) fail(errc::format_error, what + ": bad magic");
}

}  // namespace detail

inline void write_index(std::ostream& os, const IvfPqIndex& idx) {
  const auto& cq = idx.coarse.centroids;
  const auto& pq = idx.pq;
  os.write("PIMIDX01", 8);
  detail::put_u32(os, static_cast<std::uint32_t>(cq.dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(cq.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(pq.m()));
  detail::put_u32(os, static_cast<std::uint32_t>(pq.kstar()));
  detail::put_u8(os, idx.encoded.residual ? 1 : 0);
  for (auto v : cq.values()) detail::put_f32(os, v);
  for (std::size_t i = 0; i < pq.m(); ++i)
    for (auto v : pq.table(i).values()) detail::put_f32(os, v);
  for (const auto& cl : idx.encoded.clusters) {
    detail::put_u32(os, static_cast<std::uint32_t>(cl.size()));
    for (auto id : cl.ids) detail::put_u32(os, id);
    os.write(reinterpret_cast<const char*>(cl.codes.data()), static_cast<std::streamsize>(cl.codes.size()));
  }
}

inline IvfPqIndex read_index(std::istream& is) {
  detail::expect_magic(is, "PIMIDX01", "index");
  const std::size_t dim = detail::get_u32(is);
  const std::size_t nc = detail::get_u32(is);
  const std::size_t m = detail::get_u32(is);
  const std::size_t kstar = detail::get_u32(is);
  const bool residual = detail::get_u8(is) != 0;
  require(dim > 0 && nc > 0 && m > 0 && dim % m == 0 && kstar >= 1 && kstar <= 256,
          errc::format_error, "index: inconsistent header");
  IvfPqIndex idx;
  idx.coarse.centroids = Dataset(nc, dim);
  for (auto& v : idx.coarse.centroids.values()) v = detail::get_f32(is);
  std::vector<Dataset> tables;
  for (std::size_t i = 0; i < m; ++i) {
    Dataset t(kstar, dim / m);
    for (auto& v : t.values()) v = detail::get_f32(is);
    tables.push_back(std::move(t));
  }
  idx.pq = PQCodebook(m, kstar, std::move(tables));
  idx.encoded.m = m;
  idx.encoded.kstar = kstar;
  idx.encoded.residual = residual;
  idx.encoded.clusters.resize(nc);
  for (auto& cl : idx.encoded.clusters) {
    const std::size_t n = detail::get_u32(is);
    cl.ids.resize(n);
    for (auto& id : cl.ids) id = detail::get_u32(is);
    cl.codes.resize(n * m);
    is.read(reinterpret_cast<char*>(cl.codes.data()), static_cast<std::streamsize>(cl.codes.size()));
    if (!is) fail(errc::format_error, "index: truncated cluster data");
    for (auto c : cl.codes)
      require(c < kstar, errc::format_error, "index: code byte out of range");
  }
  return idx;
}

inline void save_index(const std::string& path, const IvfPqIndex& idx) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::format_error, "cannot write " + path);
  write_index(out, idx);
}

inline IvfPqIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::format_error, "cannot open " + path);
  return read_index(in);
}

inline void save_cooccur(const std::string& path, const std::vector<ReencodedCluster>& clusters) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::format_error, "cannot write " + path);
  out.write("PIMCOC01", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(clusters.size()));
  for (const auto& c : clusters) write_reencoded_cluster(out, c.set, c.vectors);
}

inline std::vector<ReencodedCluster> load_cooccur(const std::string& path, std::size_t capacity) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::format_error, "cannot open " + path);
  detail::expect_magic(in, "PIMCOC01", "cooccur");
  const std::size_t n = detail::get_u32(in);
  std::vector<ReencodedCluster> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) out.push_back(read_reencoded_cluster(in, capacity));
  return out;
}

/// Rows `query_id,rank,point_id,distance`.
inline void write_results_csv(std::ostream& os, const std::vector<std::vector<Neighbor>>& results) {
  os << "query_id,rank,point_id,distance\n";
  for (std::size_t q = 0; q < results.size(); ++q)
    for (std::size_t r = 0; r < results[q].size(); ++r)
      os << q << ',' << r << ',' << results[q][r].id << ',' << results[q][r].distance << '\n';
}

inline std::vector<std::vector<Neighbor>> read_results_csv(std::istream& is) {
  std::vector<std::vector<Neighbor>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("query_id", 0) == 0) continue;
    if (line.empty()) continue;
    unsigned long long q = 0, r = 0, id = 0, d = 0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%llu", &q, &r, &id, &d) != 4)
      fail(errc::format_error, "bad results row " + std::to_string(lineno));
    if (q >= out.size()) out.resize(q + 1);
    out[q].push_back({static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(id)});
  }
  return out;
}

}  // namespace pimann

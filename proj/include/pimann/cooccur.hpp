#pragma once

// Co-occurrence aware re-encoding. Frequent position-anchored code triples in a
// cluster get cache slots after the LUT; their partial sums are computed once
// per (query, cluster) and a vector that contains a cached combination refers
// to the slot instead of its member codes. Every code becomes a direct address
// into the flat [LUT | partial sums] table, so the scan loop is one load per
// address with no column arithmetic.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "pimann/core_index.hpp"
#include "pimann/error.hpp"

namespace pimann {

/// One code at one column.
struct CodeItem {
  std::uint16_t column = 0;
  std::uint8_t code = 0;

  friend constexpr bool operator==(const CodeItem&, const CodeItem&) = default;
  friend constexpr auto operator<=>(const CodeItem&, const CodeItem&) = default;
};

struct CachedCombination {
  std::vector<CodeItem> items;  // columns strictly increasing
  std::uint32_t frequency = 0;  // vectors in the cluster containing all items
};

inline constexpr std::size_t kDefaultCacheSlots = 256;

class CombinationSet {
 public:
  CombinationSet() = default;
  CombinationSet(std::size_t m, std::size_t kstar, std::size_t capacity = kDefaultCacheSlots)
      : m_(m), kstar_(kstar), capacity_(capacity) {}

  std::size_t m() const noexcept { return m_; }
  std::size_t kstar() const noexcept { return kstar_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return slots_.size(); }
  bool empty() const noexcept { return slots_.empty(); }
  bool full() const noexcept { return slots_.size() >= capacity_; }

  const CachedCombination& slot(std::size_t s) const { return slots_[s]; }
  std::span<const CachedCombination> slots() const noexcept { return slots_; }

  std::optional<std::uint16_t> find(std::span<const CodeItem> items) const {
    for (std::size_t s = 0; s < slots_.size(); ++s)
      if (std::equal(items.begin(), items.end(), slots_[s].items.begin(), slots_[s].items.end()))
        return static_cast<std::uint16_t>(s);
    return std::nullopt;
  }

  /// Appends a combination at the next slot.
  std::uint16_t add(std::vector<CodeItem> items, std::uint32_t frequency) {
    if (full())
      fail(errc::cache_overflow, "combination cache holds " + std::to_string(capacity_) + " slots");
    require(items.size() >= 2, errc::invalid_argument, "a combination needs at least two items");
    for (std::size_t i = 0; i < items.size(); ++i) {
      require(items[i].column < m_ && items[i].code < kstar_, errc::invalid_argument,
              "combination item out of range");
      require(i == 0 || items[i - 1].column < items[i].column, errc::invalid_argument,
              "combination columns must be strictly increasing");
    }
    slots_.push_back({std::move(items), frequency});
    return static_cast<std::uint16_t>(slots_.size() - 1);
  }

  /// Flat LUT indices (column * kstar + code) of a slot's members.
  std::vector<std::uint16_t> member_addresses(std::size_t s) const {
    std::vector<std::uint16_t> out;
    for (const auto& it : slots_[s].items)
      out.push_back(static_cast<std::uint16_t>(it.column * kstar_ + it.code));
    return out;
  }

  std::size_t total_members() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.items.size();
    return n;
  }

 private:
  std::size_t m_ = 0;
  std::size_t kstar_ = 0;
  std::size_t capacity_ = kDefaultCacheSlots;
  std::vector<CachedCombination> slots_;
};

/// Item co-occurrence graph of one cluster: nodes are (column, code) items,
/// edge weights count the vectors in which two items appear together within
/// a bounded column window.
class ItemCooccurrenceGraph {
 public:
  ItemCooccurrenceGraph(const EncodedCluster& cluster, std::size_t m, std::size_t window) {
    for (std::size_t v = 0; v < cluster.size(); ++v) {
      auto code = cluster.code(v, m);
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < std::min(m, a + window); ++b)
          ++edges_[key({static_cast<std::uint16_t>(a), code[a]},
                       {static_cast<std::uint16_t>(b), code[b]})];
    }
  }

  std::uint32_t weight(CodeItem a, CodeItem b) const {
    auto it = edges_.find(key(a, b));
    return it == edges_.end() ? 0 : it->second;
  }

  std::size_t edge_count() const noexcept { return edges_.size(); }

 private:
  static std::uint64_t key(CodeItem a, CodeItem b) {
    return (std::uint64_t{a.column} << 40) | (std::uint64_t{a.code} << 32) |
           (std::uint64_t{b.column} << 8) | b.code;
  }

  std::unordered_map<std::uint64_t, std::uint32_t> edges_;
};

struct MiningOptions {
  std::size_t slots = kDefaultCacheSlots;  // m
  std::size_t window = 4;                  // max column span of a triple
  std::uint32_t min_support = 2;           // triples seen fewer times are ignored
};

namespace detail {

struct TripleKey {
  CodeItem a, b, c;
  friend constexpr auto operator<=>(const TripleKey&, const TripleKey&) = default;
  friend constexpr bool operator==(const TripleKey&, const TripleKey&) = default;
};

inline std::uint64_t pack(const TripleKey& t) {
  auto item = [](CodeItem i) { return (std::uint64_t{i.column} << 8) | i.code; };
  return (item(t.a) << 32) | (item(t.b) << 16) | item(t.c);
}

inline TripleKey unpack(std::uint64_t k) {
  auto item = [](std::uint64_t v) {
    return CodeItem{static_cast<std::uint16_t>((v >> 8) & 0xff), static_cast<std::uint8_t>(v & 0xff)};
  };
  return {item(k >> 32), item(k >> 16), item(k)};
}

}  // namespace detail

/// Exact triple counts over column windows, then greedy slot allocation:
/// triples in descending frequency (ties lexicographic on (column, code)),
/// each followed by whichever of its three pairs are not cached yet, until the
/// slot budget is spent.
inline CombinationSet build_icg_and_mine(const EncodedCluster& cluster, std::size_t m,
                                         std::size_t kstar, const MiningOptions& opts = {}) {
  require(m <= 256, errc::invalid_argument, "co-occurrence mining supports M <= 256");
  require(opts.window >= 3, errc::invalid_argument, "triple window must span >= 3 columns");
  CombinationSet set(m, kstar, opts.slots);
  if (cluster.size() == 0 || opts.slots == 0 || m < 3) return set;

  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  for (std::size_t v = 0; v < cluster.size(); ++v) {
    auto code = cluster.code(v, m);
    auto item = [&](std::size_t c) { return CodeItem{static_cast<std::uint16_t>(c), code[c]}; };
    for (std::size_t a = 0; a < m; ++a) {
      const std::size_t end = std::min(m, a + opts.window);
      for (std::size_t b = a + 1; b < end; ++b)
        for (std::size_t c = b + 1; c < end; ++c)
          ++counts[detail::pack({item(a), item(b), item(c)})];
    }
  }

  std::vector<std::pair<std::uint32_t, detail::TripleKey>> ranked;
  for (const auto& [k, n] : counts)
    if (n >= opts.min_support) ranked.emplace_back(n, detail::unpack(k));
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });

  const ItemCooccurrenceGraph graph(cluster, m, opts.window);
  for (const auto& [freq, t] : ranked) {
    if (set.full()) break;
    set.add({t.a, t.b, t.c}, freq);
    const std::vector<CodeItem> pairs[3] = {{t.a, t.b}, {t.a, t.c}, {t.b, t.c}};
    for (const auto& p : pairs) {
      if (set.full()) break;
      if (!set.find(p)) set.add(p, graph.weight(p[0], p[1]));
    }
  }
  return set;
}

/// Direct address of every slot: M * kstar + slot.
struct CacheLayout {
  std::size_t base = 0;  // M * kstar
  std::vector<std::uint16_t> address;
};

inline CacheLayout layout_cache(const CombinationSet& set, std::size_t m, std::size_t kstar) {
  if (set.size() > set.capacity())
    fail(errc::cache_overflow, std::to_string(set.size()) + " slots exceed capacity " +
                                   std::to_string(set.capacity()));
  const std::size_t base = m * kstar;
  if (base + set.size() > 65536)
    fail(errc::cache_overflow, "direct addresses exceed 16 bits (M*kstar + slots = " +
                                   std::to_string(base + set.size()) + ")");
  CacheLayout l{base, {}};
  l.address.reserve(set.size());
  for (std::size_t s = 0; s < set.size(); ++s) l.address.push_back(static_cast<std::uint16_t>(base + s));
  return l;
}

/// Original codes first as column * kstar + code (ascending column), then
/// combination addresses (ascending slot).
struct ReencodedVector {
  std::vector<std::uint16_t> addrs;

  std::size_t len() const noexcept { return addrs.size(); }
  /// Entries as stored, counting the leading length field.
  std::size_t stored_entries() const noexcept { return 1 + addrs.size(); }
  std::size_t stored_bytes() const noexcept { return 1 + 2 * addrs.size(); }

  friend bool operator==(const ReencodedVector&, const ReencodedVector&) = default;
};

/// Matching state precomputed from a combination set; reusable across vectors.
class Reencoder {
 public:
  Reencoder(const CombinationSet& set, const CacheLayout& layout)
      : set_(&set), layout_(&layout) {
    require(layout.address.size() == set.size(), errc::invalid_argument,
            "cache layout does not match combination set");
    for (std::size_t s = 0; s < set.size(); ++s)
      (set.slot(s).items.size() >= 3 ? triples_ : pairs_).push_back(s);
  }

  ReencodedVector operator()(std::span<const std::uint8_t> code) const {
    const std::size_t m = set_->m();
    require(code.size() == m, errc::invalid_argument, "code length differs from M");
    std::vector<char> used(m, 0);
    std::vector<std::size_t> matched;
    auto try_match = [&](std::size_t s) {
      const auto& items = set_->slot(s).items;
      for (const auto& it : items)
        if (used[it.column] || code[it.column] != it.code) return;
      for (const auto& it : items) used[it.column] = 1;
      matched.push_back(s);
    };
    for (auto s : triples_) try_match(s);
    for (auto s : pairs_) try_match(s);
    std::sort(matched.begin(), matched.end());

    ReencodedVector out;
    out.addrs.reserve(m);
    for (std::size_t c = 0; c < m; ++c)
      if (!used[c]) out.addrs.push_back(static_cast<std::uint16_t>(c * set_->kstar() + code[c]));
    for (auto s : matched) out.addrs.push_back(layout_->address[s]);
    return out;
  }

 private:
  const CombinationSet* set_;
  const CacheLayout* layout_;
  std::vector<std::size_t> triples_;
  std::vector<std::size_t> pairs_;
};

inline ReencodedVector reencode(std::span<const std::uint8_t> code, const CombinationSet& set,
                                const CacheLayout& layout) {
  return Reencoder(set, layout)(code);
}

/// Recovers the original M-byte code.
inline std::vector<std::uint8_t> decode(const ReencodedVector& v, const CombinationSet& set,
                                        const CacheLayout& layout) {
  const std::size_t m = set.m();
  std::vector<std::uint8_t> code(m);
  std::vector<char> seen(m, 0);
  auto put = [&](std::size_t col, std::uint8_t c) {
    if (col >= m || seen[col]) fail(errc::corrupt_encoding, "column " + std::to_string(col) + " repeated");
    seen[col] = 1;
    code[col] = c;
  };
  for (auto a : v.addrs) {
    if (a < layout.base) {
      put(a / set.kstar(), static_cast<std::uint8_t>(a % set.kstar()));
    } else {
      const std::size_t s = a - layout.base;
      if (s >= set.size()) fail(errc::corrupt_encoding, "address " + std::to_string(a) + " past cache");
      for (const auto& it : set.slot(s).items) put(it.column, it.code);
    }
  }
  if (std::count(seen.begin(), seen.end(), 1) != static_cast<std::ptrdiff_t>(m))
    fail(errc::corrupt_encoding, "re-encoded vector does not cover every column");
  return code;
}

/// [LUT entries | partial sums], 32-bit so a sum of three 16-bit entries fits.
struct ExtendedLut {
  std::size_t base_size = 0;
  std::vector<std::uint32_t> values;

  std::size_t slots() const noexcept { return values.size() - base_size; }
};

inline ExtendedLut compute_partial_sums(const Lut& lut, const CombinationSet& set) {
  require(lut.m == set.m() && lut.kstar == set.kstar(), errc::invalid_argument,
          "LUT shape does not match combination set");
  ExtendedLut x{lut.entries.size(), {}};
  x.values.reserve(lut.entries.size() + set.size());
  x.values.assign(lut.entries.begin(), lut.entries.end());
  for (std::size_t s = 0; s < set.size(); ++s) {
    std::uint32_t sum = 0;
    for (const auto& it : set.slot(s).items) sum += lut.entries[it.column * lut.kstar + it.code];
    x.values.push_back(sum);
  }
  return x;
}

inline std::uint32_t adc_distance_reencoded(const ReencodedVector& v, const ExtendedLut& xlut) {
  std::uint32_t acc = 0;
  for (auto a : v.addrs) {
    if (a >= xlut.values.size())
      fail(errc::corrupt_encoding, "address " + std::to_string(a) + " outside extended LUT");
    acc += xlut.values[a];
  }
  return acc;
}

struct LengthStats {
  double mean_len = 0.0;
  double reduction = 0.0;  // 1 - mean_len / M
  bool adopted = false;
};

inline LengthStats length_stats(std::span<const ReencodedVector> cluster, std::size_t m,
                                double adoption_threshold = 0.5) {
  LengthStats st;
  if (cluster.empty() || m == 0) return st;
  double total = 0.0;
  for (const auto& v : cluster) total += static_cast<double>(v.len());
  st.mean_len = total / static_cast<double>(cluster.size());
  st.reduction = 1.0 - st.mean_len / static_cast<double>(m);
  st.adopted = st.reduction > adoption_threshold;
  return st;
}

namespace detail {

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }
inline void put_u16(std::ostream& os, std::uint16_t v) {
  os.put(static_cast<char>(v & 0xff));
  os.put(static_cast<char>(v >> 8));
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  put_u16(os, static_cast<std::uint16_t>(v & 0xffff));
  put_u16(os, static_cast<std::uint16_t>(v >> 16));
}
inline std::uint8_t get_u8(std::istream& is) {
  const int c = is.get();
  if (c == std::char_traits<char>::eof()) fail(errc::format_error, "truncated re-encoded stream");
  return static_cast<std::uint8_t>(c);
}
inline std::uint16_t get_u16(std::istream& is) {
  const std::uint16_t lo = get_u8(is);
  return static_cast<std::uint16_t>(lo | (std::uint16_t{get_u8(is)} << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
  const std::uint32_t lo = get_u16(is);
  return lo | (std::uint32_t{get_u16(is)} << 16);
}

}  // namespace detail

struct ReencodedCluster {
  CombinationSet set;
  std::vector<ReencodedVector> vectors;
};

// Little-endian, byte aligned:
//   u16 M, u16 kstar, u16 slots,
//   per slot: u8 member count, member direct addresses as u16,
//   u32 vector count,
//   per vector: u8 len, len x u16 direct addresses.
inline void write_reencoded_cluster(std::ostream& os, const CombinationSet& set,
                                    std::span<const ReencodedVector> vectors) {
  detail::put_u16(os, static_cast<std::uint16_t>(set.m()));
  detail::put_u16(os, static_cast<std::uint16_t>(set.kstar()));
  detail::put_u16(os, static_cast<std::uint16_t>(set.size()));
  for (std::size_t s = 0; s < set.size(); ++s) {
    const auto members = set.member_addresses(s);
    detail::put_u8(os, static_cast<std::uint8_t>(members.size()));
    for (auto a : members) detail::put_u16(os, a);
  }
  detail::put_u32(os, static_cast<std::uint32_t>(vectors.size()));
  for (const auto& v : vectors) {
    require(v.len() <= 255, errc::invalid_argument, "re-encoded length exceeds one byte");
    detail::put_u8(os, static_cast<std::uint8_t>(v.len()));
    for (auto a : v.addrs) detail::put_u16(os, a);
  }
}

inline ReencodedCluster read_reencoded_cluster(std::istream& is,
                                               std::size_t capacity = kDefaultCacheSlots) {
  const std::size_t m = detail::get_u16(is);
  const std::size_t kstar = detail::get_u16(is);
  const std::size_t nslots = detail::get_u16(is);
  require(kstar >= 1, errc::format_error, "kstar must be positive");
  ReencodedCluster out{CombinationSet(m, kstar, std::max(capacity, nslots)), {}};
  for (std::size_t s = 0; s < nslots; ++s) {
    const std::size_t n = detail::get_u8(is);
    std::vector<CodeItem> items;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = detail::get_u16(is);
      items.push_back({static_cast<std::uint16_t>(a / kstar), static_cast<std::uint8_t>(a % kstar)});
    }
    try {
      out.set.add(std::move(items), 0);
    } catch (const Error& e) {
      fail(errc::format_error, std::string("bad slot table: ") + e.what());
    }
  }
  const std::size_t count = detail::get_u32(is);
  out.vectors.resize(count);
  for (auto& v : out.vectors) {
    const std::size_t len = detail::get_u8(is);
    v.addrs.resize(len);
    for (auto& a : v.addrs) a = detail::get_u16(is);
  }
  return out;
}

}  // namespace pimann

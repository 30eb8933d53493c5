#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pimann {

/// A scored candidate: 32-bit fixed-point distance plus point id. Ordered by
/// distance, then id, which makes every top-k selection set-deterministic.
struct Neighbor {
  std::uint32_t distance = 0;
  std::uint32_t id = 0;

  friend constexpr bool operator==(const Neighbor&, const Neighbor&) = default;
  friend constexpr bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  }
};

inline constexpr std::size_t kNeighborBytes = 8;

inline std::vector<std::uint32_t> ids_of(std::span<const Neighbor> v) {
  std::vector<std::uint32_t> ids;
  ids.reserve(v.size());
  for (const auto& n : v) ids.push_back(n.id);
  return ids;
}

}  // namespace pimann

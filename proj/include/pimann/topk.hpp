#pragma once

// Bounded heaps for per-thread top-k, the pruned max/min heap merge that
// produces one top-k per DPU, and the host-side merge across DPUs.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pimann/neighbor.hpp"

namespace pimann {

enum class HeapMode { max_root, min_root };

class BoundedHeap {
 public:
  explicit BoundedHeap(std::size_t capacity, HeapMode mode = HeapMode::max_root)
      : capacity_(capacity), mode_(mode) {
    items_.reserve(capacity);
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  bool full() const noexcept { return items_.size() >= capacity_; }
  HeapMode mode() const noexcept { return mode_; }
  const Neighbor& root() const { return items_.front(); }
  std::span<const Neighbor> items() const noexcept { return items_; }

  /// Unconditional push; the caller has checked capacity.
  void push(const Neighbor& n) {
    items_.push_back(n);
    with_order([&](auto cmp) { std::push_heap(items_.begin(), items_.end(), cmp); });
  }

  Neighbor pop() {
    with_order([&](auto cmp) { std::pop_heap(items_.begin(), items_.end(), cmp); });
    Neighbor n = items_.back();
    items_.pop_back();
    return n;
  }

  void replace_root(const Neighbor& n) {
    with_order([&](auto cmp) {
      std::pop_heap(items_.begin(), items_.end(), cmp);
      items_.back() = n;
      std::push_heap(items_.begin(), items_.end(), cmp);
    });
  }

  /// Re-heapify in the other orientation (O(size)).
  void convert(HeapMode mode) {
    mode_ = mode;
    with_order([&](auto cmp) { std::make_heap(items_.begin(), items_.end(), cmp); });
  }

  bool is_heap() const {
    bool ok = false;
    with_order([&](auto cmp) { ok = std::is_heap(items_.begin(), items_.end(), cmp); });
    return ok;
  }

  std::vector<Neighbor> sorted() const {
    std::vector<Neighbor> out(items_);
    std::sort(out.begin(), out.end());
    return out;
  }

  void clear() noexcept { items_.clear(); }

 private:
  template <typename F>
  void with_order(F&& f) const {
    if (mode_ == HeapMode::max_root)
      f([](const Neighbor& a, const Neighbor& b) { return a < b; });
    else
      f([](const Neighbor& a, const Neighbor& b) { return b < a; });
  }

  std::size_t capacity_;
  HeapMode mode_;
  std::vector<Neighbor> items_;
};

/// Keeps the k smallest seen. A candidate replaces the root only when it orders
/// strictly before it; with ascending-id scans a distance tie keeps the incumbent.
/// Returns true when the heap changed.
inline bool thread_insert(BoundedHeap& heap, const Neighbor& candidate) {
  if (heap.capacity() == 0) return false;
  if (!heap.full()) {
    heap.push(candidate);
    return true;
  }
  if (candidate < heap.root()) {
    heap.replace_root(candidate);
    return true;
  }
  return false;
}

struct MergeStats {
  std::size_t insertions = 0;      // entries moved into the global heap
  std::size_t comparisons = 0;     // prune checks against the global root
  std::size_t pruned_entries = 0;  // local entries discarded without insertion
  std::size_t pruned_heaps = 0;
};

struct MergeResult {
  BoundedHeap global;
  MergeStats stats;
};

/// Merges complete thread-local max-heaps. Each is turned into a min-heap and
/// drained root-first into a k-bounded global max-heap; once the global heap is
/// full, a local heap whose root does not order before the global root can
/// contribute nothing and is dropped whole. The check runs before every
/// insertion. Heaps are consumed in the given order, one after another, the way
/// semaphore-guarded threads would serialize.
inline MergeResult pruned_merge(std::vector<BoundedHeap> heaps, std::size_t k) {
  MergeResult out{BoundedHeap(k, HeapMode::max_root), {}};
  if (k == 0) {
    for (auto& local : heaps) out.stats.pruned_entries += local.size();
    return out;
  }
  for (auto& local : heaps) {
    local.convert(HeapMode::min_root);
    while (!local.empty()) {
      if (out.global.full()) {
        ++out.stats.comparisons;
        if (!(local.root() < out.global.root())) {
          out.stats.pruned_entries += local.size();
          ++out.stats.pruned_heaps;
          local.clear();
          break;
        }
        out.global.replace_root(local.pop());
      } else {
        out.global.push(local.pop());
      }
      ++out.stats.insertions;
    }
  }
  return out;
}

/// Exact k smallest across per-DPU lists (any order within a list).
inline std::vector<Neighbor> host_aggregate(std::span<const std::vector<Neighbor>> per_dpu,
                                            std::size_t k) {
  std::vector<Neighbor> all;
  for (const auto& l : per_dpu) all.insert(all.end(), l.begin(), l.end());
  const std::size_t kk = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end());
  all.resize(kk);
  return all;
}

}  // namespace pimann

#pragma once

// Analytic cost model of query execution on bank-partitioned DPUs.
//
// Work is executed functionally (real LUT lookups, real heaps) while every
// operation is tallied; tallies are turned into cycles with a small set of
// configurable weights. A DPU issues at most one instruction per cycle and a
// single thread at most one per `dispatch_interval` cycles, so with t threads
// a stage takes max(sum of instructions, slowest thread's serial time). MRAM
// reads follow a latency curve that is flat up to `plateau_bytes` and linear
// beyond; the scan loop double-buffers so a read only stalls its thread for
// the part of its latency not covered by the previous buffer's compute.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimann/cooccur.hpp"
#include "pimann/core_index.hpp"
#include "pimann/error.hpp"
#include "pimann/scheduler.hpp"
#include "pimann/topk.hpp"

namespace pimann {

struct MramLatencyCurve {
  double base_cycles = 77.0;
  double small_slope = 0.5;       // cycles per 8 bytes up to the plateau
  double per_8byte_cycles = 4.0;  // cycles per 8 bytes beyond the plateau
  std::size_t plateau_bytes = 256;
};

/// Instruction weights, in single-issue cycles.
struct CostWeights {
  double add = 1.0;
  double mul_factor = 8.0;      // a multiply costs this many adds
  double lookup = 4.0;          // per flat-LUT lookup in the scan loop
  double point_overhead = 25.0;  // per scanned vector: loop, id, heap compare
  double transfer_setup = 20.0;  // per MRAM read issued
  double heap_level = 4.0;       // per sift level of a heap update
  double lut_store = 2.0;        // per LUT entry written
  double partial_member = 2.0;   // per member load+add of a partial sum
  double partial_store = 1.0;
  double semaphore = 8.0;        // sem_take + sem_give around a shared-heap update
  double barrier_cycles = 40.0;
};

struct DpuModel {
  std::size_t wram_bytes = 64 * 1024;
  std::size_t mram_bytes = 64u << 20;
  std::size_t max_threads = 24;
  std::size_t pipeline_depth = 14;
  std::size_t dispatch_interval = 11;  // cycles between two instructions of one thread
  double clock_hz = 350e6;
  MramLatencyCurve latency;
  std::size_t min_transfer = 8;
  std::size_t max_transfer = 2048;
  std::size_t transfer_alignment = 8;
  double dma_cycles_per_byte = 0.5;  // DMA engine occupancy
  CostWeights weights;
  // Host link, reported separately from DPU cycles.
  double host_bandwidth = 6.0e9;  // bytes per second per DIMM
  double launch_overhead_s = 20e-6;
};

inline void validate_transfer(std::size_t bytes, const DpuModel& model) {
  if (bytes < model.min_transfer || bytes > model.max_transfer ||
      bytes % model.transfer_alignment != 0)
    fail(errc::invalid_transfer, "MRAM transfer of " + std::to_string(bytes) +
                                     " bytes; legal sizes are multiples of " +
                                     std::to_string(model.transfer_alignment) + " in [" +
                                     std::to_string(model.min_transfer) + ", " +
                                     std::to_string(model.max_transfer) + "]");
}

inline double mram_read_latency(std::size_t bytes, const DpuModel& model) {
  validate_transfer(bytes, model);
  const auto& c = model.latency;
  const double below = static_cast<double>(std::min(bytes, c.plateau_bytes)) / 8.0;
  const double above =
      static_cast<double>(bytes > c.plateau_bytes ? bytes - c.plateau_bytes : 0) / 8.0;
  return c.base_cycles + c.small_slope * below + c.per_8byte_cycles * above;
}

inline std::size_t round_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

/// Splits a byte count into legal transfers (each padded to the alignment).
inline std::vector<std::size_t> split_transfers(std::size_t bytes, const DpuModel& model) {
  std::vector<std::size_t> out;
  std::size_t left = round_up(std::max(bytes, model.min_transfer), model.transfer_alignment);
  while (left > 0) {
    const std::size_t t = std::min(left, model.max_transfer);
    out.push_back(t);
    left -= t;
  }
  return out;
}

enum class Stage : std::size_t { lut_build = 0, partial_sums = 1, distance_calc = 2, topk = 3 };
inline constexpr std::size_t kStageCount = 4;
inline constexpr std::array<std::string_view, kStageCount> kStageNames = {
    "lut_build", "partial_sums", "distance_calc", "topk"};

// ---------------------------------------------------------------------------
// WRAM budget

struct WramParams {
  std::size_t dim = 128;
  std::size_t m = 16;
  std::size_t kstar = 256;
  std::size_t k = 10;
  std::size_t threads = 11;
  std::size_t buffer_vectors = 16;
  std::size_t code_bytes = 0;  // bytes per stored vector; 0 means M (classic)
  std::size_t slots = 0;       // cached partial sums
};

struct WramRegion {
  std::string name;
  std::size_t bytes = 0;
  std::array<bool, kStageCount> live{};
  bool reuses_codebook = false;  // placed over the codebook once the LUT exists
};

struct WramPlan {
  std::vector<WramRegion> regions;
  std::array<std::size_t, kStageCount> stage_bytes{};
  std::size_t codebook_bytes = 0;
  std::size_t lut_bytes = 0;
  std::size_t partial_bytes = 0;
  std::size_t buffer_bytes_per_thread = 0;
  std::size_t heap_bytes = 0;
  std::size_t threads = 0;
  std::size_t buffer_vectors = 0;

  /// Peak of the LUT stage: codebook, LUT and the combination-sum region.
  std::size_t combined_bytes() const noexcept { return codebook_bytes + lut_bytes + partial_bytes; }
  std::size_t buffers_total() const noexcept { return buffer_bytes_per_thread * threads; }
};

/// Stage-wise WRAM allocation. The codebook (D * kstar bytes) is only live
/// while the LUT (M * kstar * 2 bytes) is built; afterwards its space holds the
/// per-thread read buffers. With cached combinations (`slots` > 0) the partial
/// sums get a region next to the LUT, at least as large as the LUT itself.
inline WramPlan plan_wram(const WramParams& p, const DpuModel& model = {}) {
  require(p.dim > 0 && p.m > 0 && p.kstar > 0 && p.k > 0 && p.threads > 0 && p.buffer_vectors > 0,
          errc::invalid_argument, "WRAM plan parameters must be positive");
  const std::size_t code_bytes = p.code_bytes == 0 ? p.m : p.code_bytes;
  WramPlan plan;
  plan.threads = p.threads;
  plan.buffer_vectors = p.buffer_vectors;
  plan.codebook_bytes = p.dim * p.kstar;
  plan.lut_bytes = p.m * p.kstar * sizeof(std::uint16_t);
  plan.partial_bytes = p.slots == 0 ? 0 : std::max(plan.lut_bytes, p.slots * sizeof(std::uint32_t));
  plan.buffer_bytes_per_thread = round_up(p.buffer_vectors * code_bytes, model.transfer_alignment);
  plan.heap_bytes = p.threads * p.k * kNeighborBytes;

  auto add = [&](std::string name, std::size_t bytes, std::array<bool, kStageCount> live,
                 bool reuse = false) {
    plan.regions.push_back({std::move(name), bytes, live, reuse});
  };
  add("codebook", plan.codebook_bytes, {true, false, false, false});
  add("lut", plan.lut_bytes, {true, true, true, true});
  add("partial_sums", plan.partial_bytes, {true, true, true, true});
  add("read_buffers", plan.buffers_total(), {false, false, true, false}, true);
  add("thread_heaps", plan.heap_bytes, {true, true, true, true});
  add("dpu_heap", p.k * kNeighborBytes, {false, false, false, true});

  for (const auto& r : plan.regions)
    for (std::size_t s = 0; s < kStageCount; ++s)
      if (r.live[s]) plan.stage_bytes[s] += r.bytes;
  for (std::size_t s = 0; s < kStageCount; ++s)
    if (plan.stage_bytes[s] > model.wram_bytes)
      fail(errc::wram_overflow, "stage " + std::string(kStageNames[s]) + " needs " +
                                    std::to_string(plan.stage_bytes[s]) + " bytes of WRAM, " +
                                    std::to_string(model.wram_bytes) + " available");
  return plan;
}

// ---------------------------------------------------------------------------
// Cost records

struct StageCost {
  double cycles = 0.0;
  double instructions = 0.0;
  std::uint64_t mram_reads = 0;
  std::uint64_t mram_bytes = 0;
  std::uint64_t wram_lookups = 0;

  StageCost& operator+=(const StageCost& o) {
    cycles += o.cycles;
    instructions += o.instructions;
    mram_reads += o.mram_reads;
    mram_bytes += o.mram_bytes;
    wram_lookups += o.wram_lookups;
    return *this;
  }
};

using StageCosts = std::array<StageCost, kStageCount>;

inline StageCosts& operator+=(StageCosts& a, const StageCosts& b) {
  for (std::size_t s = 0; s < kStageCount; ++s) a[s] += b[s];
  return a;
}

inline double total_cycles(const StageCosts& c) {
  double t = 0.0;
  for (const auto& s : c) t += s.cycles;
  return t;
}

namespace detail {

struct ThreadWork {
  double instructions = 0.0;
  double stall = 0.0;
};

inline double stage_cycles(std::span<const ThreadWork> work, double dma_bytes, const DpuModel& m) {
  double total = 0.0;
  double slowest = 0.0;
  for (const auto& w : work) {
    total += w.instructions;
    slowest = std::max(slowest, w.instructions * static_cast<double>(m.dispatch_interval) + w.stall);
  }
  return std::max({total, slowest, dma_bytes * m.dma_cycles_per_byte});
}

inline double log2_ceil(std::size_t k) {
  return k <= 1 ? 1.0 : static_cast<double>(std::bit_width(k - 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-cluster simulation

/// A cluster as resident in one DPU's MRAM.
struct ClusterView {
  std::span<const std::uint32_t> ids;
  std::span<const std::uint8_t> codes;         // classic layout, ids.size() x M
  std::span<const ReencodedVector> reencoded;  // used when `reencoded_layout`
  bool reencoded_layout = false;
  std::size_t slots = 0;         // cached partial sums
  std::size_t slot_members = 0;  // total members over all slots

  std::size_t size() const noexcept { return ids.size(); }
};

/// Tables for one (query, cluster) pair.
struct QueryTables {
  Lut lut;
  ExtendedLut xlut;  // populated for re-encoded clusters
};

struct SimParams {
  std::size_t dim = 128;
  std::size_t m = 16;
  std::size_t kstar = 256;
  std::size_t threads = 11;
  std::size_t buffer_vectors = 16;
  std::size_t k = 10;
};

inline void check_sim_params(const SimParams& p, const DpuModel& model, const WramPlan& plan) {
  require(p.threads >= 1 && p.threads <= model.max_threads, errc::invalid_argument,
          "thread count " + std::to_string(p.threads) + " outside [1, " +
              std::to_string(model.max_threads) + "]");
  if (p.threads > plan.threads || p.buffer_vectors > plan.buffer_vectors)
    fail(errc::wram_overflow, "WRAM plan sized for " + std::to_string(plan.threads) +
                                  " threads x " + std::to_string(plan.buffer_vectors) +
                                  " vectors, run asks for more");
}

/// Scans one cluster for one query, accumulating into the thread heaps.
/// Barrier 0 and 1 close the LUT stage, barrier 2 the partial sums.
inline void scan_cluster(const ClusterView& view, const QueryTables& tables, const SimParams& p,
                         const DpuModel& model, const WramPlan& plan,
                         std::vector<BoundedHeap>& heaps, StageCosts& acc) {
  const auto& w = model.weights;
  const std::size_t t = p.threads;
  const double dispatch = static_cast<double>(model.dispatch_interval);
  const std::size_t dsub = p.dim / p.m;

  // LUT construction: entries split evenly, each thread reads its share of
  // the codebook (1 byte per component) from MRAM.
  {
    std::vector<detail::ThreadWork> work(t);
    const std::size_t entries = p.m * p.kstar;
    const double per_entry = static_cast<double>(dsub) * (w.add + w.mul_factor * w.add + w.add) + w.lut_store;
    StageCost c;
    double dma = 0.0;
    for (std::size_t th = 0; th < t; ++th) {
      const std::size_t lo = entries * th / t;
      const std::size_t hi = entries * (th + 1) / t;
      if (hi == lo) continue;
      work[th].instructions += static_cast<double>(hi - lo) * per_entry;
      for (auto bytes : split_transfers((hi - lo) * dsub, model)) {
        work[th].instructions += w.transfer_setup;
        work[th].stall += mram_read_latency(bytes, model);
        ++c.mram_reads;
        c.mram_bytes += bytes;
        dma += static_cast<double>(bytes);
      }
    }
    c.wram_lookups = entries * dsub;
    for (const auto& x : work) c.instructions += x.instructions;
    c.cycles = detail::stage_cycles(work, dma, model) + 2 * w.barrier_cycles;
    acc[static_cast<std::size_t>(Stage::lut_build)] += c;
  }

  if (view.reencoded_layout && view.slots > 0) {
    std::vector<detail::ThreadWork> work(t);
    StageCost c;
    const double avg_members = static_cast<double>(view.slot_members) / static_cast<double>(view.slots);
    for (std::size_t th = 0; th < t; ++th) {
      const std::size_t n = view.slots * (th + 1) / t - view.slots * th / t;
      work[th].instructions = static_cast<double>(n) * (avg_members * w.partial_member + w.partial_store);
    }
    c.wram_lookups = view.slot_members;
    for (const auto& x : work) c.instructions += x.instructions;
    c.cycles = detail::stage_cycles(work, 0.0, model) + w.barrier_cycles;
    acc[static_cast<std::size_t>(Stage::partial_sums)] += c;
  }

  // Distance scan: buffers of `buffer_vectors` consecutive vectors are dealt
  // round-robin to threads.
  {
    std::vector<detail::ThreadWork> work(t);
    std::vector<double> prev_compute(t, -1.0);
    StageCost c;
    double dma = 0.0;
    const std::size_t n = view.size();
    const double insert_cost = w.heap_level * detail::log2_ceil(p.k);
    for (std::size_t b = 0, first = 0; first < n; ++b, first += p.buffer_vectors) {
      const std::size_t th = b % t;
      const std::size_t last = std::min(n, first + p.buffer_vectors);
      std::size_t bytes = 0;
      double compute = 0.0;
      for (std::size_t i = first; i < last; ++i) {
        std::uint32_t dist = 0;
        std::size_t len = 0;
        if (view.reencoded_layout) {
          const auto& v = view.reencoded[i];
          dist = adc_distance_reencoded(v, tables.xlut);
          len = v.len();
          bytes += v.stored_bytes();
        } else {
          dist = adc_distance(view.codes.subspan(i * p.m, p.m), tables.lut);
          len = p.m;
          bytes += p.m;
        }
        c.wram_lookups += len;
        compute += static_cast<double>(len) * w.lookup + w.point_overhead;
        if (thread_insert(heaps[th], {dist, view.ids[i]})) compute += insert_cost;
      }
      if (round_up(bytes, model.transfer_alignment) > plan.buffer_bytes_per_thread)
        fail(errc::wram_overflow, "read buffer of " + std::to_string(plan.buffer_bytes_per_thread) +
                                      " bytes cannot hold " + std::to_string(bytes) + " bytes");
      for (auto tb : split_transfers(bytes, model)) {
        const double lat = mram_read_latency(tb, model);
        compute += w.transfer_setup;
        const double hidden = prev_compute[th] < 0.0 ? 0.0 : prev_compute[th] * dispatch;
        work[th].stall += std::max(0.0, lat - hidden);
        ++c.mram_reads;
        c.mram_bytes += tb;
        dma += static_cast<double>(tb);
      }
      work[th].instructions += compute;
      prev_compute[th] = compute;
    }
    for (const auto& x : work) c.instructions += x.instructions;
    c.cycles = detail::stage_cycles(work, dma, model);
    acc[static_cast<std::size_t>(Stage::distance_calc)] += c;
  }
}

/// Barrier 3, then the pruned merge of thread heaps into one DPU top-k.
/// Heap conversion runs in parallel; shared-heap updates are serialized.
inline std::vector<Neighbor> finish_query(std::vector<BoundedHeap>& heaps, const SimParams& p,
                                          const DpuModel& model, StageCosts& acc,
                                          MergeStats* stats_out = nullptr) {
  const auto& w = model.weights;
  std::vector<detail::ThreadWork> work(heaps.size());
  for (std::size_t th = 0; th < heaps.size(); ++th)
    work[th].instructions = static_cast<double>(heaps[th].size()) * w.heap_level;
  auto merged = pruned_merge(std::move(heaps), p.k);
  heaps.clear();
  const double lg = detail::log2_ceil(p.k);
  const double serial = static_cast<double>(merged.stats.insertions) * (w.semaphore + w.heap_level * lg) +
                        static_cast<double>(merged.stats.comparisons) * (w.semaphore + 2.0 * w.add);
  StageCost c;
  for (const auto& x : work) c.instructions += x.instructions;
  c.instructions += serial;
  c.cycles = detail::stage_cycles(work, 0.0, model) + serial * static_cast<double>(model.dispatch_interval) +
             w.barrier_cycles;
  acc[static_cast<std::size_t>(Stage::topk)] += c;
  if (stats_out) *stats_out = merged.stats;
  return merged.global.sorted();
}

inline std::vector<BoundedHeap> make_thread_heaps(const SimParams& p) {
  return std::vector<BoundedHeap>(p.threads, BoundedHeap(p.k));
}

struct ClusterResult {
  StageCosts cost{};
  std::vector<Neighbor> topk;
  MergeStats merge;
};

/// One query against one cluster, from LUT construction to the DPU top-k.
inline ClusterResult simulate_cluster(const ClusterView& view, const QueryTables& tables,
                                      const SimParams& p, const DpuModel& model,
                                      const WramPlan& plan) {
  check_sim_params(p, model, plan);
  ClusterResult r;
  auto heaps = make_thread_heaps(p);
  scan_cluster(view, tables, p, model, plan, heaps, r.cost);
  r.topk = finish_query(heaps, p, model, r.cost, &r.merge);
  return r;
}

// ---------------------------------------------------------------------------
// Batch simulation

struct CostReport {
  std::vector<StageCosts> per_dpu;
  std::size_t queries = 0;
  double makespan = 0.0;  // cycles
  double qps = 0.0;
  double clock_hz = 0.0;
  std::uint64_t host_bytes = 0;  // partial top-k returned to the host
  double host_seconds = 0.0;
  std::uint64_t dpu_query_results = 0;  // (DPU, query) partial lists returned

  double dpu_total(std::size_t d) const { return total_cycles(per_dpu[d]); }

  StageCosts stage_totals() const {
    StageCosts t{};
    for (const auto& d : per_dpu) t += d;
    return t;
  }

  std::uint64_t distance_lookups() const {
    return stage_totals()[static_cast<std::size_t>(Stage::distance_calc)].wram_lookups;
  }

  /// Stage share of summed DPU cycles.
  std::array<double, kStageCount> breakdown() const {
    std::array<double, kStageCount> f{};
    const auto t = stage_totals();
    const double sum = total_cycles(t);
    if (sum <= 0.0) return f;
    for (std::size_t s = 0; s < kStageCount; ++s) f[s] = t[s].cycles / sum;
    return f;
  }
};

struct BatchResult {
  CostReport cost;
  std::vector<std::vector<Neighbor>> topk;  // per query, final host result
};

/// Runs every scheduled pair. Each DPU handles its queries in ascending id,
/// scanning that query's clusters back to back with persistent thread heaps,
/// then merges once per (DPU, query). `tables(query, cluster)` supplies the
/// query tables; `clusters[c]` is the resident copy of cluster c.
template <typename TableSource>
BatchResult simulate_batch(const Schedule& schedule, std::span<const ClusterView> clusters,
                           std::size_t nqueries, TableSource&& tables, const SimParams& p,
                           const DpuModel& model, const WramPlan& plan) {
  check_sim_params(p, model, plan);
  BatchResult out;
  auto& rep = out.cost;
  rep.per_dpu.assign(schedule.ndpu(), StageCosts{});
  rep.queries = nqueries;
  rep.clock_hz = model.clock_hz;
  std::vector<std::vector<std::vector<Neighbor>>> partial(nqueries);

  for (std::size_t d = 0; d < schedule.ndpu(); ++d) {
    std::map<std::uint32_t, std::vector<std::uint32_t>> by_query;
    for (const auto& pr : schedule.assigned[d]) {
      require(pr.query < nqueries, errc::invalid_argument, "schedule references unknown query");
      require(pr.cluster < clusters.size(), errc::missing_replica,
              "schedule references unknown cluster " + std::to_string(pr.cluster));
      by_query[pr.query].push_back(pr.cluster);
    }
    for (const auto& [q, cls] : by_query) {
      auto heaps = make_thread_heaps(p);
      for (auto c : cls) {
        const QueryTables qt = tables(q, c);
        scan_cluster(clusters[c], qt, p, model, plan, heaps, rep.per_dpu[d]);
      }
      auto local = finish_query(heaps, p, model, rep.per_dpu[d]);
      rep.host_bytes += local.size() * kNeighborBytes;
      ++rep.dpu_query_results;
      partial[q].push_back(std::move(local));
    }
  }

  for (std::size_t d = 0; d < rep.per_dpu.size(); ++d) rep.makespan = std::max(rep.makespan, rep.dpu_total(d));
  rep.qps = rep.makespan > 0.0 ? static_cast<double>(nqueries) * model.clock_hz / rep.makespan : 0.0;
  rep.host_seconds = static_cast<double>(rep.host_bytes) / model.host_bandwidth +
                     (rep.per_dpu.empty() ? 0.0 : model.launch_overhead_s);

  out.topk.resize(nqueries);
  for (std::size_t q = 0; q < nqueries; ++q) out.topk[q] = host_aggregate(partial[q], p.k);
  return out;
}

/// Flat-LUT lookups one query needs with classic encoding and balanced
/// clusters: (N / |C|) * nprobe * M.
inline double expected_lookups_per_query(double n, double nclusters, double nprobe, double m) {
  return n / nclusters * nprobe * m;
}

// ---------------------------------------------------------------------------
// Synthetic workloads for shape studies

struct SyntheticWorkload {
  std::size_t clusters = 4;
  std::size_t points = 8448;  // per cluster; 11 * 768 deals evenly for power-of-two buffers
  std::size_t dim = 128;
  std::size_t m = 16;
  std::size_t kstar = 256;
  std::size_t k = 10;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  std::vector<std::vector<std::uint32_t>> ids;
  std::vector<std::vector<std::uint8_t>> codes;
  Lut lut;

  ClusterView view(std::size_t c) const { return {ids[c], codes[c], {}, false, 0, 0}; }
};

inline SyntheticData make_synthetic_workload(const SyntheticWorkload& w) {
  std::mt19937_64 rng(w.seed);
  SyntheticData d;
  d.lut = Lut{w.m, w.kstar, std::vector<std::uint16_t>(w.m * w.kstar), 1.0};
  for (auto& e : d.lut.entries) e = static_cast<std::uint16_t>(rng() & 0xffff);
  std::uint32_t next = 0;
  for (std::size_t c = 0; c < w.clusters; ++c) {
    std::vector<std::uint32_t> ids(w.points);
    std::vector<std::uint8_t> codes(w.points * w.m);
    for (auto& id : ids) id = next++;
    for (auto& b : codes) b = static_cast<std::uint8_t>(rng() % w.kstar);
    d.ids.push_back(std::move(ids));
    d.codes.push_back(std::move(codes));
  }
  return d;
}

inline double simulate_synthetic_qps(const SyntheticData& data, const SyntheticWorkload& w,
                                     std::size_t threads, std::size_t buffer_vectors,
                                     const DpuModel& model) {
  const SimParams p{w.dim, w.m, w.kstar, threads, buffer_vectors, w.k};
  const auto plan = plan_wram({w.dim, w.m, w.kstar, w.k, threads, buffer_vectors, 0, 0}, model);
  check_sim_params(p, model, plan);
  QueryTables qt{data.lut, {}};
  StageCosts cost{};
  auto heaps = make_thread_heaps(p);
  for (std::size_t c = 0; c < data.ids.size(); ++c)
    scan_cluster(data.view(c), qt, p, model, plan, heaps, cost);
  finish_query(heaps, p, model, cost);
  return model.clock_hz / total_cycles(cost);
}

struct ScalingPoint {
  std::size_t threads = 0;
  double qps = 0.0;
  double ratio = 0.0;  // qps / qps(1 thread)
};

/// Simulated QPS of one query over a fixed workload for 1..max_threads threads.
inline std::vector<ScalingPoint> thread_scaling_curve(const DpuModel& model = {},
                                                      const SyntheticWorkload& w = {},
                                                      std::size_t buffer_vectors = 16) {
  const auto data = make_synthetic_workload(w);
  std::vector<ScalingPoint> out;
  for (std::size_t t = 1; t <= model.max_threads; ++t)
    out.push_back({t, simulate_synthetic_qps(data, w, t, buffer_vectors, model), 0.0});
  for (auto& pt : out) pt.ratio = pt.qps / out.front().qps;
  return out;
}

struct BufferPoint {
  std::size_t buffer_vectors = 0;
  double qps = 0.0;
};

inline std::vector<BufferPoint> buffer_size_curve(std::span<const std::size_t> sizes,
                                                  const DpuModel& model = {},
                                                  const SyntheticWorkload& w = {},
                                                  std::size_t threads = 11) {
  const auto data = make_synthetic_workload(w);
  std::vector<BufferPoint> out;
  for (auto b : sizes) out.push_back({b, simulate_synthetic_qps(data, w, threads, b, model)});
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

/// One row per DPU per stage.
inline void write_cost_csv(std::ostream& os, const CostReport& r) {
  os << "dpu_id,stage,cycles,instructions,mram_reads,mram_bytes,wram_lookups\n";
  char buf[64];
  for (std::size_t d = 0; d < r.per_dpu.size(); ++d)
    for (std::size_t s = 0; s < kStageCount; ++s) {
      const auto& c = r.per_dpu[d][s];
      os << d << ',' << kStageNames[s] << ',';
      std::snprintf(buf, sizeof buf, "%.3f,%.3f", c.cycles, c.instructions);
      os << buf << ',' << c.mram_reads << ',' << c.mram_bytes << ',' << c.wram_lookups << '\n';
    }
}

inline nlohmann::json cost_summary(const CostReport& r) {
  nlohmann::json j;
  j["queries"] = r.queries;
  j["ndpu"] = r.per_dpu.size();
  j["makespan_cycles"] = r.makespan;
  j["simulated_qps"] = r.qps;
  j["clock_hz"] = r.clock_hz;
  j["host_bytes"] = r.host_bytes;
  j["host_seconds"] = r.host_seconds;
  j["distance_lookups"] = r.distance_lookups();
  const auto totals = r.stage_totals();
  const auto frac = r.breakdown();
  for (std::size_t s = 0; s < kStageCount; ++s) {
    auto& st = j["stages"][std::string(kStageNames[s])];
    st["cycles"] = totals[s].cycles;
    st["fraction"] = frac[s];
    st["mram_reads"] = totals[s].mram_reads;
    st["mram_bytes"] = totals[s].mram_bytes;
    st["wram_lookups"] = totals[s].wram_lookups;
  }
  return j;
}

}  // namespace pimann

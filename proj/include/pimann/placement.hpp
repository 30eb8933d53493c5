#pragma once

// Offline cluster-to-DPU placement: hot clusters are replicated so that every
// DPU carries roughly the mean workload W = (1/ndpu) * sum(s_i * f_i), and
// nearby clusters are co-located so their partial top-k merge on the DPU.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pimann/error.hpp"
#include "pimann/matrix.hpp"

namespace pimann {

struct ClusterStats {
  std::vector<std::uint64_t> sizes;  // s_i
  std::vector<double> frequency;     // f_i
  Dataset centroids;                 // used only for neighbor order

  std::size_t nclusters() const noexcept { return sizes.size(); }
  double workload(std::size_t i) const {
    return static_cast<double>(sizes[i]) * frequency[i];
  }
  double total_workload() const {
    double w = 0.0;
    for (std::size_t i = 0; i < nclusters(); ++i) w += workload(i);
    return w;
  }
};

/// Add-one smoothed selection frequencies from past filtering results. Each
/// batch holds, per query, the ids of the clusters it probed.
inline std::vector<double> estimate_frequencies(
    const std::vector<std::vector<std::vector<std::uint32_t>>>& history,
    std::size_t nclusters) {
  require(!history.empty(), errc::invalid_argument, "frequency history is empty");
  std::vector<double> counts(nclusters, 0.0);
  double total = 0.0;
  for (const auto& batch : history)
    for (const auto& probed : batch)
      for (auto c : probed) {
        require(c < nclusters, errc::invalid_argument,
                "history references cluster " + std::to_string(c));
        counts[c] += 1.0;
        total += 1.0;
      }
  const double denom = total + static_cast<double>(nclusters);
  for (auto& c : counts) c = (c + 1.0) / denom;
  return counts;
}

struct PlacementOptions {
  double initial_threshold = 1.0;
  double threshold_step = 0.02;
  std::size_t max_replicas = std::numeric_limits<std::size_t>::max();  // 1 disables replication
  bool colocate_neighbors = true;
};

struct PlacementMap {
  std::size_t ndpu = 0;
  std::uint64_t max_dpu_size = 0;
  double mean_workload = 0.0;  // W-bar
  double threshold = 1.0;      // final thld
  std::vector<std::vector<std::uint32_t>> replicas;  // cluster -> DPU ids
  std::vector<double> workload;                      // W[d]
  std::vector<std::uint64_t> stored;                 // S[d]

  std::size_t nclusters() const noexcept { return replicas.size(); }

  /// Clusters resident on each DPU, ascending id.
  std::vector<std::vector<std::uint32_t>> clusters_per_dpu() const {
    std::vector<std::vector<std::uint32_t>> out(ndpu);
    for (std::uint32_t c = 0; c < replicas.size(); ++c)
      for (auto d : replicas[c]) out[d].push_back(c);
    return out;
  }
};

struct Ledgers {
  std::vector<double> workload;
  std::vector<std::uint64_t> stored;
};

/// W and S implied by a replica map: each replica carries w_i / ncpy.
inline Ledgers recompute_ledgers(const std::vector<std::vector<std::uint32_t>>& replicas,
                                 std::size_t ndpu, const ClusterStats& stats) {
  Ledgers l{std::vector<double>(ndpu, 0.0), std::vector<std::uint64_t>(ndpu, 0)};
  for (std::size_t c = 0; c < replicas.size(); ++c) {
    if (replicas[c].empty()) continue;
    const double per = stats.workload(c) / static_cast<double>(replicas[c].size());
    for (auto d : replicas[c]) {
      l.workload[d] += per;
      l.stored[d] += stats.sizes[c];
    }
  }
  return l;
}

namespace detail {

inline std::vector<std::vector<std::uint32_t>> nearest_neighbors(const Dataset& centroids,
                                                                 std::size_t count) {
  const std::size_t n = centroids.rows();
  std::vector<std::vector<std::uint32_t>> out(n);
  if (n == 0 || count == 0) return out;
  const std::size_t take = std::min(count, n - 1);
  std::vector<std::pair<double, std::uint32_t>> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        d.emplace_back(l2_sqr(centroids.row(i), centroids.row(j)), static_cast<std::uint32_t>(j));
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
    for (std::size_t t = 0; t < take; ++t) out[i].push_back(d[t].second);
  }
  return out;
}

enum class AttemptStatus { placed, workload_blocked, capacity_blocked };

struct Attempt {
  AttemptStatus status = AttemptStatus::placed;
  PlacementMap map;
};

// One greedy pass at a fixed threshold.
inline Attempt place_at_threshold(const ClusterStats& stats, std::size_t ndpu,
                                  std::uint64_t max_dpu_size, double mean_w, double thld,
                                  const std::vector<std::uint32_t>& order,
                                  const std::vector<std::vector<std::uint32_t>>& neighbors,
                                  const PlacementOptions& opts) {
  const std::size_t nc = stats.nclusters();
  Attempt a;
  auto& m = a.map;
  m.ndpu = ndpu;
  m.max_dpu_size = max_dpu_size;
  m.mean_workload = mean_w;
  m.threshold = thld;
  m.replicas.assign(nc, {});
  m.workload.assign(ndpu, 0.0);
  m.stored.assign(ndpu, 0);

  const double limit = mean_w * thld;
  const double eps = 1e-12 * std::max(1.0, limit);
  std::size_t cursor = 0;  // persists across clusters

  for (auto c : order) {
    if (!m.replicas[c].empty()) continue;
    const double w = stats.workload(c);
    const std::uint64_t s = stats.sizes[c];
    std::size_t ncpy = mean_w > 0.0 ? static_cast<std::size_t>(std::ceil(w / mean_w - 1e-12)) : 1;
    ncpy = std::clamp<std::size_t>(ncpy, 1, std::min(ndpu, opts.max_replicas));
    const double per = w / static_cast<double>(ncpy);

    for (std::size_t r = 0; r < ncpy; ++r) {
      bool placed = false;
      bool capacity_left = false;
      for (std::size_t step = 0; step < ndpu; ++step) {
        const std::size_t d = (cursor + step) % ndpu;
        const auto& reps = m.replicas[c];
        if (std::find(reps.begin(), reps.end(), d) != reps.end()) continue;
        if (m.stored[d] + s > max_dpu_size) continue;
        capacity_left = true;
        if (m.workload[d] + per > limit + eps) continue;
        m.replicas[c].push_back(static_cast<std::uint32_t>(d));
        m.workload[d] += per;
        m.stored[d] += s;
        cursor = (d + 1) % ndpu;
        placed = true;
        break;
      }
      if (!placed) {
        a.status = capacity_left ? AttemptStatus::workload_blocked : AttemptStatus::capacity_blocked;
        return a;
      }
    }

    if (!opts.colocate_neighbors) continue;
    const std::size_t last = m.replicas[c].back();
    if (!(m.workload[last] < mean_w)) continue;
    for (auto nb : neighbors[c]) {
      if (!m.replicas[nb].empty()) continue;
      const double wn = stats.workload(nb);
      if (m.workload[last] + wn < mean_w && m.stored[last] + stats.sizes[nb] <= max_dpu_size) {
        m.replicas[nb].push_back(static_cast<std::uint32_t>(last));
        m.workload[last] += wn;
        m.stored[last] += stats.sizes[nb];
      }
    }
  }
  return a;
}

}  // namespace detail

/// Greedy replicated placement. Clusters are taken in descending workload;
/// cluster i gets ncpy = ceil(w_i / W) replicas on distinct DPUs, each found by a
/// round-robin scan that admits DPU d when W[d] + w_i/ncpy <= W * thld and
/// S[d] + s_i <= max_dpu_size. After a cluster is placed, up to `nprobe` of its
/// nearest unallocated neighbors join the last chosen DPU while it stays below
/// W. If any scan fails the whole pass restarts with thld raised by the step,
/// so the recorded threshold is the smallest grid value that completes.
inline PlacementMap plan_placement(const ClusterStats& stats, std::size_t ndpu,
                                   std::uint64_t max_dpu_size, std::size_t nprobe,
                                   const PlacementOptions& opts = {}) {
  require(ndpu >= 1, errc::invalid_argument, "ndpu must be >= 1");
  require(stats.frequency.size() == stats.nclusters(), errc::invalid_argument,
          "one frequency per cluster required");
  const std::uint64_t total =
      std::accumulate(stats.sizes.begin(), stats.sizes.end(), std::uint64_t{0});
  if (total > static_cast<std::uint64_t>(ndpu) * max_dpu_size)
    fail(errc::infeasible_placement,
         "capacity: " + std::to_string(total) + " vectors exceed ndpu*MAX_DPU_SIZE=" +
             std::to_string(static_cast<std::uint64_t>(ndpu) * max_dpu_size));
  for (std::size_t c = 0; c < stats.nclusters(); ++c)
    if (stats.sizes[c] > max_dpu_size)
      fail(errc::infeasible_placement, "capacity: cluster " + std::to_string(c) + " holds " +
                                           std::to_string(stats.sizes[c]) +
                                           " vectors > MAX_DPU_SIZE");

  const double mean_w = stats.total_workload() / static_cast<double>(ndpu);

  std::vector<std::uint32_t> order(stats.nclusters());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return stats.workload(a) > stats.workload(b);
  });
  const auto neighbors = opts.colocate_neighbors && stats.centroids.rows() == stats.nclusters()
                             ? detail::nearest_neighbors(stats.centroids, nprobe)
                             : std::vector<std::vector<std::uint32_t>>(stats.nclusters());

  // Beyond ndpu the workload bound can no longer bind; only capacity can fail.
  const double ceiling = static_cast<double>(ndpu) + 1.0;
  for (std::size_t bump = 0;; ++bump) {
    const double thld = opts.initial_threshold + static_cast<double>(bump) * opts.threshold_step;
    auto attempt = detail::place_at_threshold(stats, ndpu, max_dpu_size, mean_w, thld, order,
                                              neighbors, opts);
    if (attempt.status == detail::AttemptStatus::placed) return std::move(attempt.map);
    if (thld > ceiling)
      fail(errc::infeasible_placement,
           std::string(attempt.status == detail::AttemptStatus::capacity_blocked
                           ? "capacity: no DPU has room under MAX_DPU_SIZE="
                           : "workload: threshold exceeded at MAX_DPU_SIZE=") +
               std::to_string(max_dpu_size));
  }
}

struct BalanceMetrics {
  double workload_cv = 0.0;
  double workload_max_over_mean = 0.0;
  double stored_max_over_mean = 0.0;
  std::map<std::size_t, std::size_t> replica_histogram;  // replica count -> clusters
};

namespace detail {

template <typename T>
std::pair<double, double> cv_and_peak(const std::vector<T>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (auto x : v) mean += static_cast<double>(x);
  mean /= static_cast<double>(v.size());
  if (mean == 0.0) return {0.0, 0.0};
  double var = 0.0;
  double peak = 0.0;
  for (auto x : v) {
    const double d = static_cast<double>(x) - mean;
    var += d * d;
    peak = std::max(peak, static_cast<double>(x));
  }
  var /= static_cast<double>(v.size());
  return {std::sqrt(var) / mean, peak / mean};
}

}  // namespace detail

inline BalanceMetrics balance_metrics(const PlacementMap& plan) {
  BalanceMetrics m;
  std::tie(m.workload_cv, m.workload_max_over_mean) = detail::cv_and_peak(plan.workload);
  m.stored_max_over_mean = detail::cv_and_peak(plan.stored).second;
  for (const auto& r : plan.replicas) ++m.replica_histogram[r.size()];
  return m;
}

// Text form:
//   ndpu=<n>
//   max_dpu_size=<n>
//   mean_workload=<real>
//   thld=<real>
//   <cluster_id>: <dpu_id>[,<dpu_id>...]
// Reals are written with 17 significant digits so parsing is exact.
inline void write_placement(std::ostream& os, const PlacementMap& m) {
  os << "# cluster placement\n";
  os << "ndpu=" << m.ndpu << "\n";
  os << "max_dpu_size=" << m.max_dpu_size << "\n";
  os << std::setprecision(17) << "mean_workload=" << m.mean_workload << "\n";
  os << "thld=" << m.threshold << "\n";
  for (std::size_t c = 0; c < m.replicas.size(); ++c) {
    os << c << ":";
    for (std::size_t r = 0; r < m.replicas[c].size(); ++r)
      os << (r == 0 ? " " : ",") << m.replicas[c][r];
    os << "\n";
  }
}

/// Parses the text form. Ledgers are rebuilt from `stats` when given.
inline PlacementMap read_placement(std::istream& is, const ClusterStats* stats = nullptr) {
  PlacementMap m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const auto colon = line.find(':');
    try {
      if (eq != std::string::npos && colon == std::string::npos) {
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "ndpu") m.ndpu = std::stoull(val);
        else if (key == "max_dpu_size") m.max_dpu_size = std::stoull(val);
        else if (key == "mean_workload") m.mean_workload = std::stod(val);
        else if (key == "thld") m.threshold = std::stod(val);
        else fail(errc::format_error, "unknown placement key '" + key + "'");
        continue;
      }
      require(colon != std::string::npos, errc::format_error,
              "malformed placement line " + std::to_string(lineno));
      const std::size_t c = std::stoull(line.substr(0, colon));
      require(c == m.replicas.size(), errc::format_error,
              "placement clusters must be listed in order (line " + std::to_string(lineno) + ")");
      std::vector<std::uint32_t> reps;
      std::stringstream ss(line.substr(colon + 1));
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        const auto d = std::stoull(tok);
        require(d < m.ndpu, errc::format_error, "DPU id out of range on line " + std::to_string(lineno));
        reps.push_back(static_cast<std::uint32_t>(d));
      }
      m.replicas.push_back(std::move(reps));
    } catch (const std::logic_error&) {
      fail(errc::format_error, "unparsable placement line " + std::to_string(lineno));
    }
  }
  if (stats) {
    auto l = recompute_ledgers(m.replicas, m.ndpu, *stats);
    m.workload = std::move(l.workload);
    m.stored = std::move(l.stored);
  } else {
    m.workload.assign(m.ndpu, 0.0);
    m.stored.assign(m.ndpu, 0);
  }
  return m;
}

}  // namespace pimann

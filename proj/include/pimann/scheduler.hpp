#pragma once

// Online replica selection for a batch of filtered queries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pimann/error.hpp"
#include "pimann/placement.hpp"

namespace pimann {

struct QueryBatch {
  std::vector<std::vector<std::uint32_t>> filtered;  // per query, probed cluster ids

  std::size_t size() const noexcept { return filtered.size(); }
  std::size_t pairs() const {
    std::size_t n = 0;
    for (const auto& f : filtered) n += f.size();
    return n;
  }
};

struct ScheduledPair {
  std::uint32_t query;
  std::uint32_t cluster;
  friend bool operator==(const ScheduledPair&, const ScheduledPair&) = default;
};

struct Schedule {
  std::vector<std::vector<ScheduledPair>> assigned;  // per DPU
  std::vector<std::uint64_t> workload;               // W[d], in vectors scanned
  std::size_t pair_operations = 0;

  std::size_t ndpu() const noexcept { return assigned.size(); }
};

/// Two passes. Pairs whose cluster has a single replica are forced. The rest
/// are grouped by cluster, clusters ordered by descending size, and each pair
/// (in query order) goes to the replica minimizing W[d] + s, lowest DPU id on
/// ties. W grows by the cluster size per assigned pair.
inline Schedule schedule_batch(const QueryBatch& batch, const PlacementMap& plan,
                               std::span<const std::uint64_t> cluster_sizes) {
  Schedule out;
  out.assigned.resize(plan.ndpu);
  out.workload.assign(plan.ndpu, 0);

  std::map<std::uint32_t, std::vector<std::uint32_t>> pending;  // cluster -> queries
  for (std::uint32_t q = 0; q < batch.filtered.size(); ++q) {
    for (auto c : batch.filtered[q]) {
      ++out.pair_operations;
      if (c >= plan.replicas.size() || plan.replicas[c].empty())
        fail(errc::missing_replica, "cluster " + std::to_string(c) + " has no replica in the plan");
      require(c < cluster_sizes.size(), errc::invalid_argument,
              "no size recorded for cluster " + std::to_string(c));
      const auto& reps = plan.replicas[c];
      if (reps.size() == 1) {
        out.assigned[reps[0]].push_back({q, c});
        out.workload[reps[0]] += cluster_sizes[c];
      } else {
        pending[c].push_back(q);
      }
    }
  }

  std::vector<std::uint32_t> order;
  order.reserve(pending.size());
  for (const auto& [c, qs] : pending) order.push_back(c);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return cluster_sizes[a] > cluster_sizes[b];
  });

  for (auto c : order) {
    const auto& reps = plan.replicas[c];
    const std::uint64_t s = cluster_sizes[c];
    for (auto q : pending[c]) {
      ++out.pair_operations;
      std::uint32_t best = reps[0];
      for (auto d : reps)
        if (out.workload[d] < out.workload[best] ||
            (out.workload[d] == out.workload[best] && d < best))
          best = d;
      out.assigned[best].push_back({q, c});
      out.workload[best] += s;
    }
  }
  return out;
}

/// Baseline: every pair goes to the cluster's first listed replica.
inline Schedule schedule_first_replica(const QueryBatch& batch, const PlacementMap& plan,
                                       std::span<const std::uint64_t> cluster_sizes) {
  Schedule out;
  out.assigned.resize(plan.ndpu);
  out.workload.assign(plan.ndpu, 0);
  for (std::uint32_t q = 0; q < batch.filtered.size(); ++q)
    for (auto c : batch.filtered[q]) {
      ++out.pair_operations;
      if (c >= plan.replicas.size() || plan.replicas[c].empty())
        fail(errc::missing_replica, "cluster " + std::to_string(c) + " has no replica in the plan");
      require(c < cluster_sizes.size(), errc::invalid_argument,
              "no size recorded for cluster " + std::to_string(c));
      const auto d = plan.replicas[c].front();
      out.assigned[d].push_back({q, c});
      out.workload[d] += cluster_sizes[c];
    }
  return out;
}

struct ScheduleMetrics {
  double workload_cv = 0.0;
  std::uint64_t max_workload = 0;  // makespan proxy
  double mean_workload = 0.0;
};

inline ScheduleMetrics schedule_metrics(const Schedule& s) {
  ScheduleMetrics m;
  if (s.workload.empty()) return m;
  m.workload_cv = detail::cv_and_peak(s.workload).first;
  m.max_workload = *std::max_element(s.workload.begin(), s.workload.end());
  double sum = 0.0;
  for (auto w : s.workload) sum += static_cast<double>(w);
  m.mean_workload = sum / static_cast<double>(s.workload.size());
  return m;
}

/// Rows `dpu_id,query_id,cluster_id` after a header line.
inline void write_schedule_csv(std::ostream& os, const Schedule& s) {
  os << "dpu_id,query_id,cluster_id\n";
  for (std::size_t d = 0; d < s.assigned.size(); ++d)
    for (const auto& p : s.assigned[d]) os << d << ',' << p.query << ',' << p.cluster << '\n';
}

inline Schedule read_schedule_csv(std::istream& is, std::size_t ndpu,
                                  std::span<const std::uint64_t> cluster_sizes) {
  Schedule s;
  s.assigned.resize(ndpu);
  s.workload.assign(ndpu, 0);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("dpu_id", 0) == 0) continue;
    if (line.empty()) continue;
    unsigned long long d = 0, q = 0, c = 0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu", &d, &q, &c) != 3 || d >= ndpu ||
        c >= cluster_sizes.size())
      fail(errc::format_error, "bad schedule row " + std::to_string(lineno));
    s.assigned[d].push_back({static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(c)});
    s.workload[d] += cluster_sizes[c];
  }
  return s;
}

}  // namespace pimann

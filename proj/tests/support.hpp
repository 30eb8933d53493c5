#pragma once

// Shared generators for the placement/scheduler tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "pimann/placement.hpp"
#include "pimann/scheduler.hpp"

namespace pimann::testing {

/// Cluster sizes uniform in [lo, hi]; access frequencies Zipf(s) over a random
/// permutation of the clusters. Centroids are random 8-D points.
inline ClusterStats zipf_stats(std::size_t nclusters, std::uint64_t seed, double s = 1.0,
                               std::uint64_t lo = 500, std::uint64_t hi = 1500) {
  std::mt19937_64 rng(seed);
  ClusterStats st;
  std::uniform_int_distribution<std::uint64_t> size(lo, hi);
  for (std::size_t c = 0; c < nclusters; ++c) st.sizes.push_back(size(rng));
  std::vector<std::size_t> rank(nclusters);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  st.frequency.resize(nclusters);
  double h = 0.0;
  for (std::size_t r = 1; r <= nclusters; ++r) h += 1.0 / std::pow(static_cast<double>(r), s);
  for (std::size_t c = 0; c < nclusters; ++c)
    st.frequency[c] = 1.0 / std::pow(static_cast<double>(rank[c] + 1), s) / h;
  st.centroids = Dataset(nclusters, 8);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (auto& v : st.centroids.values()) v = static_cast<float>(u(rng));
  return st;
}

/// Each query probes `nprobe` distinct clusters drawn by frequency.
inline QueryBatch frequency_batch(const ClusterStats& st, std::size_t queries, std::size_t nprobe,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::uint32_t> pick(st.frequency.begin(), st.frequency.end());
  QueryBatch b;
  for (std::size_t q = 0; q < queries; ++q) {
    std::vector<std::uint32_t> f;
    while (f.size() < nprobe) {
      const auto c = pick(rng);
      if (std::find(f.begin(), f.end(), c) == f.end()) f.push_back(c);
    }
    b.filtered.push_back(std::move(f));
  }
  return b;
}

struct ZipfWorkload {
  ClusterStats popularity;  // drives query generation
  ClusterStats planned;     // frequencies estimated from past batches
  QueryBatch batch;         // a fresh batch to schedule
};

/// Zipf popularity as seen by the system: placement uses frequencies
/// estimated from `history` earlier batches drawn like the scheduled one.
inline ZipfWorkload zipf_workload(std::size_t nclusters, std::uint64_t seed, std::size_t nprobe,
                                  std::size_t queries, std::size_t history = 10) {
  ZipfWorkload w;
  w.popularity = zipf_stats(nclusters, seed);
  std::vector<std::vector<std::vector<std::uint32_t>>> past;
  for (std::size_t h = 0; h < history; ++h)
    past.push_back(frequency_batch(w.popularity, queries, nprobe, seed * 1000 + h).filtered);
  w.planned = w.popularity;
  w.planned.frequency = estimate_frequencies(past, nclusters);
  w.batch = frequency_batch(w.popularity, queries, nprobe, seed * 1000 + history);
  return w;
}

/// Baseline: each pair goes to a uniformly random replica.
inline Schedule schedule_random(const QueryBatch& batch, const PlacementMap& plan,
                                std::span<const std::uint64_t> sizes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Schedule s;
  s.assigned.resize(plan.ndpu);
  s.workload.assign(plan.ndpu, 0);
  for (std::uint32_t q = 0; q < batch.size(); ++q)
    for (auto c : batch.filtered[q]) {
      const auto& reps = plan.replicas[c];
      const auto d = reps[rng() % reps.size()];
      s.assigned[d].push_back({q, c});
      s.workload[d] += sizes[c];
    }
  return s;
}

}  // namespace pimann::testing

#pragma once

// End-to-end orchestration. Every stage reads its inputs from and writes its
// outputs to the run's output directory, so each can be re-run alone:
//
//   train     index.bin, cooccur.bin (when enabled)
//   place     frequencies.csv, placement.txt
//   schedule  schedule_batch_NNN.csv
//   simulate  cost_batch_NNN.csv, batch_NNN.json, results.csv
//   report    groundtruth.ivecs (when computed), report.json, summary.txt

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimann/artifacts.hpp"
#include "pimann/config.hpp"
#include "pimann/cooccur.hpp"
#include "pimann/core_index.hpp"
#include "pimann/dpu_sim.hpp"
#include "pimann/io.hpp"
#include "pimann/placement.hpp"
#include "pimann/scheduler.hpp"
#include "pimann/synthetic.hpp"

namespace pimann {

namespace fs = std::filesystem;

/// Files written during a run, removed again if the run fails.
class ArtifactTracker {
 public:
  explicit ArtifactTracker(std::string dir) : dir_(std::move(dir)) {}

  const std::string& dir() const noexcept { return dir_; }
  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  std::ofstream create(const std::string& name, bool binary = false) {
    fs::create_directories(dir_);
    const auto p = path(name);
    written_.push_back(p);
    std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
    if (!out) fail(errc::format_error, "cannot write " + p);
    return out;
  }

  void note(const std::string& name) { written_.push_back(path(name)); }

  void remove_all() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    written_.clear();
  }

  const std::vector<std::string>& written() const noexcept { return written_; }

 private:
  std::string dir_;
  std::vector<std::string> written_;
};

inline std::string batch_name(const char* prefix, std::size_t b, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", prefix, b, ext);
  return buf;
}

/// Runs `fn`, prefixing any library error with the stage name.
template <typename F>
decltype(auto) tagged(const char* stage, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.code(), std::string("[") + stage + "] " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data

struct Workload {
  Dataset base;
  Dataset queries;
};

inline StructuredSpec structured_spec(const RunConfig& cfg) {
  StructuredSpec s;
  s.dim = cfg.synth_dim;
  s.subspaces = cfg.m;
  s.blobs = cfg.nclusters;
  s.structure_seed = cfg.seed;
  return s;
}

inline Workload load_workload(const RunConfig& cfg) {
  Workload w;
  if (cfg.base.empty()) {
    if (cfg.synth_kind == DataKind::structured) {
      const auto spec = structured_spec(cfg);
      w.base = make_structured(spec, cfg.synth_n, cfg.seed * 2 + 1);
      w.queries = make_structured(spec, cfg.synth_queries, cfg.seed * 2 + 2);
    } else {
      BlobSpec spec;
      spec.dim = cfg.synth_dim;
      spec.blobs = cfg.nclusters;
      spec.structure_seed = cfg.seed;
      w.base = make_blobs(spec, cfg.synth_n, cfg.seed * 2 + 1);
      w.queries = make_blobs(spec, cfg.synth_queries, cfg.seed * 2 + 2);
    }
  } else {
    w.base = read_dataset(cfg.base, cfg.max_rows);
    w.queries = read_dataset(cfg.query);
  }
  require(w.base.dim() == w.queries.dim(), errc::invalid_data,
          "base dim " + std::to_string(w.base.dim()) + " differs from query dim " +
              std::to_string(w.queries.dim()));
  require(w.base.dim() % cfg.m == 0, errc::invalid_data, "D is not divisible by M");
  return w;
}

/// Exact top-k ids per query, from the configured file or by brute force.
/// Empty when neither is available.
inline std::vector<std::vector<std::uint32_t>> ground_truth(const RunConfig& cfg, const Workload& w) {
  std::vector<std::vector<std::uint32_t>> truth;
  if (!cfg.groundtruth.empty()) {
    const auto gt = read_vecs<std::int32_t>(cfg.groundtruth);
    require(gt.rows() >= w.queries.rows() && gt.dim() >= cfg.k, errc::invalid_data,
            "ground truth has fewer rows or columns than needed");
    for (std::size_t q = 0; q < w.queries.rows(); ++q) {
      std::vector<std::uint32_t> ids;
      for (std::size_t j = 0; j < cfg.k; ++j) ids.push_back(static_cast<std::uint32_t>(gt(q, j)));
      truth.push_back(std::move(ids));
    }
  } else if (w.base.rows() <= cfg.gt_cap) {
    for (std::size_t q = 0; q < w.queries.rows(); ++q)
      truth.push_back(brute_force_topk(w.base, w.queries.row(q), cfg.k));
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Offline phase

inline IvfPqParams index_params(const RunConfig& cfg) {
  IvfPqParams p;
  p.nclusters = cfg.nclusters;
  p.m = cfg.m;
  p.kstar = cfg.kstar;
  p.seed = cfg.seed;
  p.kmeans.max_iterations = cfg.kmeans_iterations;
  return p;
}

inline MiningOptions mining_options(const RunConfig& cfg) {
  MiningOptions o;
  o.slots = cfg.cooccur_slots;
  o.window = cfg.cooccur_window;
  o.min_support = static_cast<std::uint32_t>(cfg.cooccur_min_support);
  return o;
}

inline std::vector<ReencodedCluster> mine_and_reencode(const IvfPqIndex& index, const RunConfig& cfg) {
  std::vector<ReencodedCluster> out;
  out.reserve(index.encoded.clusters.size());
  const std::size_t m = index.pq.m();
  const std::size_t kstar = index.pq.kstar();
  for (const auto& cl : index.encoded.clusters) {
    ReencodedCluster rc{build_icg_and_mine(cl, m, kstar, mining_options(cfg)), {}};
    const auto layout = layout_cache(rc.set, m, kstar);
    const Reencoder re(rc.set, layout);
    rc.vectors.reserve(cl.size());
    for (std::size_t i = 0; i < cl.size(); ++i) rc.vectors.push_back(re(cl.code(i, m)));
    out.push_back(std::move(rc));
  }
  return out;
}

inline std::vector<std::uint64_t> cluster_sizes(const IvfPqIndex& index) {
  std::vector<std::uint64_t> s;
  for (const auto& c : index.encoded.clusters) s.push_back(c.size());
  return s;
}

/// Filtering results of `history_batches` batches of base points sampled
/// with replacement; stands in for past query traffic.
inline std::vector<std::vector<std::vector<std::uint32_t>>> sample_history(const Dataset& base,
                                                                           const IvfPqIndex& index,
                                                                           const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 101);
  std::vector<std::vector<std::vector<std::uint32_t>>> history(cfg.history_batches);
  for (auto& batch : history)
    for (std::size_t q = 0; q < cfg.batch_size; ++q) {
      const auto row = base.row(static_cast<std::size_t>(rng() % base.rows()));
      std::vector<std::uint32_t> ids;
      for (const auto& p : filter_clusters(row, index.coarse, cfg.nprobe)) ids.push_back(p.cluster);
      batch.push_back(std::move(ids));
    }
  return history;
}

inline std::uint64_t effective_max_dpu_size(const RunConfig& cfg) {
  if (cfg.max_dpu_size != 0) return cfg.max_dpu_size;
  return cfg.model.mram_bytes / (cfg.m + sizeof(std::uint32_t));
}

inline PlacementOptions placement_options(const RunConfig& cfg) {
  PlacementOptions o;
  if (cfg.max_replicas != 0) o.max_replicas = cfg.max_replicas;
  o.colocate_neighbors = cfg.colocate_neighbors;
  return o;
}

inline void write_frequencies(std::ostream& os, const ClusterStats& st) {
  os << "cluster_id,size,frequency\n";
  char buf[64];
  for (std::size_t c = 0; c < st.nclusters(); ++c) {
    std::snprintf(buf, sizeof buf, "%.17g", st.frequency[c]);
    os << c << ',' << st.sizes[c] << ',' << buf << '\n';
  }
}

inline ClusterStats read_frequencies(std::istream& is, const Dataset& centroids) {
  ClusterStats st;
  st.centroids = centroids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    unsigned long long c = 0, s = 0;
    double f = 0.0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%lf", &c, &s, &f) != 3 || c != st.sizes.size())
      fail(errc::format_error, "bad frequencies row " + std::to_string(lineno));
    st.sizes.push_back(s);
    st.frequency.push_back(f);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Online phase

inline std::vector<QueryBatch> filter_batches(const Dataset& queries, const IvfPqIndex& index,
                                              const RunConfig& cfg) {
  std::vector<QueryBatch> batches;
  for (std::size_t first = 0; first < queries.rows(); first += cfg.batch_size) {
    QueryBatch b;
    const std::size_t last = std::min(queries.rows(), first + cfg.batch_size);
    for (std::size_t q = first; q < last; ++q) {
      std::vector<std::uint32_t> ids;
      for (const auto& p : filter_clusters(queries.row(q), index.coarse, cfg.nprobe)) ids.push_back(p.cluster);
      b.filtered.push_back(std::move(ids));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

inline Schedule schedule_with_policy(const QueryBatch& batch, const PlacementMap& plan,
                                     std::span<const std::uint64_t> sizes, SchedulePolicy policy) {
  return policy == SchedulePolicy::greedy ? schedule_batch(batch, plan, sizes)
                                          : schedule_first_replica(batch, plan, sizes);
}

/// Which clusters are stored re-encoded, and the tables they need.
struct ResidentData {
  std::vector<ClusterView> views;
  std::vector<char> adopted;
  std::vector<LengthStats> stats;
  std::size_t max_code_bytes = 0;
  std::size_t max_slots = 0;
};

inline ResidentData resident_data(const IvfPqIndex& index, const std::vector<ReencodedCluster>* cooccur,
                                  const RunConfig& cfg) {
  ResidentData r;
  const std::size_t m = index.pq.m();
  const std::size_t nc = index.encoded.clusters.size();
  r.adopted.assign(nc, 0);
  r.max_code_bytes = m;
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& cl = index.encoded.clusters[c];
    ClusterView v{cl.ids, cl.codes, {}, false, 0, 0};
    if (cooccur) {
      const auto& rc = (*cooccur)[c];
      require(rc.vectors.size() == cl.size(), errc::invalid_data,
              "re-encoded cluster " + std::to_string(c) + " does not match the index");
      auto st = length_stats(rc.vectors, m, cfg.cooccur_threshold);
      if (st.adopted) {
        r.adopted[c] = 1;
        v = ClusterView{cl.ids, {}, rc.vectors, true, rc.set.size(), rc.set.total_members()};
        for (const auto& x : rc.vectors) r.max_code_bytes = std::max(r.max_code_bytes, x.stored_bytes());
        r.max_slots = std::max(r.max_slots, rc.set.size());
      }
      r.stats.push_back(st);
    }
    r.views.push_back(v);
  }
  return r;
}

inline SimParams sim_params(const IvfPqIndex& index, const RunConfig& cfg) {
  return {index.pq.dim(), index.pq.m(), index.pq.kstar(), cfg.threads, cfg.buffer_vectors, cfg.k};
}

inline WramPlan wram_plan_for(const IvfPqIndex& index, const ResidentData& r, const RunConfig& cfg) {
  return plan_wram({index.pq.dim(), index.pq.m(), index.pq.kstar(), cfg.k, cfg.threads, cfg.buffer_vectors,
                    r.max_code_bytes, r.max_slots},
                   cfg.model);
}

/// Simulates one batch. Query ids in `schedule` are batch-local; `first`
/// is the global id of the batch's first query.
inline BatchResult simulate_query_batch(const IvfPqIndex& index, const std::vector<ReencodedCluster>* cooccur,
                                        const ResidentData& resident, const Dataset& queries,
                                        std::size_t first, std::size_t count, const Schedule& schedule,
                                        const RunConfig& cfg, const WramPlan& plan) {
  const std::size_t nc = index.coarse.nclusters();
  std::vector<std::vector<ProbedCluster>> probes(count);
  std::vector<double> scales(count);
  std::vector<std::vector<std::int32_t>> slot_of(count, std::vector<std::int32_t>(nc, -1));
  for (std::size_t q = 0; q < count; ++q) {
    probes[q] = filter_clusters(queries.row(first + q), index.coarse, cfg.nprobe);
    scales[q] = query_scale(probes[q], index.pq);
    for (std::size_t p = 0; p < probes[q].size(); ++p)
      slot_of[q][probes[q][p].cluster] = static_cast<std::int32_t>(p);
  }
  auto tables = [&](std::uint32_t q, std::uint32_t c) {
    const auto p = slot_of[q][c];
    require(p >= 0, errc::invalid_argument,
            "query " + std::to_string(first + q) + " was not filtered to cluster " + std::to_string(c));
    QueryTables t{build_lut(probes[q][static_cast<std::size_t>(p)].residual, index.pq, scales[q]), {}};
    if (resident.adopted[c]) t.xlut = compute_partial_sums(t.lut, (*cooccur)[c].set);
    return t;
  };
  return simulate_batch(schedule, std::span<const ClusterView>(resident.views), count, tables,
                        sim_params(index, cfg), cfg.model, plan);
}

// ---------------------------------------------------------------------------
// Stages

inline void stage_train(const RunConfig& cfg, ArtifactTracker& out) {
  const auto w = tagged("data", [&] { return load_workload(cfg); });
  const auto index = tagged("core_index", [&] { return train_ivfpq(w.base, index_params(cfg)); });
  {
    auto os = out.create("index.bin", true);
    write_index(os, index);
  }
  if (cfg.cooccur) {
    const auto cc = tagged("cooccur", [&] { return mine_and_reencode(index, cfg); });
    out.note("cooccur.bin");
    save_cooccur(out.path("cooccur.bin"), cc);
  }
}

inline IvfPqIndex load_run_index(const ArtifactTracker& out) {
  return tagged("artifacts", [&] { return load_index(out.path("index.bin")); });
}

inline std::vector<ReencodedCluster> load_run_cooccur(const ArtifactTracker& out, const RunConfig& cfg) {
  return tagged("artifacts", [&] { return load_cooccur(out.path("cooccur.bin"), cfg.cooccur_slots); });
}

inline PlacementMap load_run_placement(const ArtifactTracker& out, const IvfPqIndex& index,
                                       ClusterStats* stats_out = nullptr) {
  return tagged("artifacts", [&] {
    std::ifstream fin(out.path("frequencies.csv"));
    if (!fin) fail(errc::format_error, "missing frequencies.csv");
    auto st = read_frequencies(fin, index.coarse.centroids);
    std::ifstream pin(out.path("placement.txt"));
    if (!pin) fail(errc::format_error, "missing placement.txt");
    auto plan = read_placement(pin, &st);
    if (stats_out) *stats_out = std::move(st);
    return plan;
  });
}

inline void stage_place(const RunConfig& cfg, ArtifactTracker& out) {
  const auto w = tagged("data", [&] { return load_workload(cfg); });
  const auto index = load_run_index(out);
  ClusterStats st;
  st.sizes = cluster_sizes(index);
  st.centroids = index.coarse.centroids;
  st.frequency = tagged("placement", [&] {
    return estimate_frequencies(sample_history(w.base, index, cfg), index.coarse.nclusters());
  });
  const auto plan = tagged("placement", [&] {
    return plan_placement(st, cfg.ndpu, effective_max_dpu_size(cfg), cfg.nprobe, placement_options(cfg));
  });
  {
    auto os = out.create("frequencies.csv");
    write_frequencies(os, st);
  }
  auto os = out.create("placement.txt");
  write_placement(os, plan);
}

inline void stage_schedule(const RunConfig& cfg, ArtifactTracker& out) {
  const auto w = tagged("data", [&] { return load_workload(cfg); });
  const auto index = load_run_index(out);
  const auto plan = load_run_placement(out, index);
  const auto sizes = cluster_sizes(index);
  const auto batches = filter_batches(w.queries, index, cfg);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto s = tagged("scheduler", [&] { return schedule_with_policy(batches[b], plan, sizes, cfg.scheduling); });
    auto os = out.create(batch_name("schedule_batch", b, "csv"));
    write_schedule_csv(os, s);
  }
}

inline void stage_simulate(const RunConfig& cfg, ArtifactTracker& out) {
  const auto w = tagged("data", [&] { return load_workload(cfg); });
  const auto index = load_run_index(out);
  std::vector<ReencodedCluster> cooccur;
  if (cfg.cooccur) cooccur = load_run_cooccur(out, cfg);
  const auto* cc = cfg.cooccur ? &cooccur : nullptr;
  const auto resident = tagged("cooccur", [&] { return resident_data(index, cc, cfg); });
  const auto plan = tagged("dpu_sim", [&] { return wram_plan_for(index, resident, cfg); });
  const auto sizes = cluster_sizes(index);

  std::vector<std::vector<Neighbor>> results;
  for (std::size_t b = 0, first = 0; first < w.queries.rows(); ++b, first += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, w.queries.rows() - first);
    const auto schedule = tagged("artifacts", [&] {
      std::ifstream in(out.path(batch_name("schedule_batch", b, "csv")));
      if (!in) fail(errc::format_error, "missing " + batch_name("schedule_batch", b, "csv"));
      return read_schedule_csv(in, cfg.ndpu, sizes);
    });
    const auto r = tagged("dpu_sim", [&] {
      return simulate_query_batch(index, cc, resident, w.queries, first, count, schedule, cfg, plan);
    });
    {
      auto os = out.create(batch_name("cost_batch", b, "csv"));
      write_cost_csv(os, r.cost);
    }
    {
      auto os = out.create(batch_name("batch", b, "json"));
      os << cost_summary(r.cost).dump(2) << '\n';
    }
    results.insert(results.end(), r.topk.begin(), r.topk.end());
  }
  auto os = out.create("results.csv");
  write_results_csv(os, results);
}

// ---------------------------------------------------------------------------
// Report

struct RunReport {
  std::size_t queries = 0;
  std::size_t batches = 0;
  bool has_truth = false;
  double recall = 0.0;
  double simulated_qps = 0.0;
  double makespan_cycles = 0.0;  // summed over batches
  std::array<double, kStageCount> breakdown{};
  double placement_threshold = 0.0;
  double placement_cv = 0.0;
  double placement_max_over_mean = 0.0;
  double stored_max_over_mean = 0.0;
  std::size_t replicas = 0;
  double schedule_cv_mean = 0.0;
  double schedule_cv_max = 0.0;
  bool cooccur = false;
  std::size_t adopted_clusters = 0;
  double mean_reduction = 0.0;  // over clusters
  std::uint64_t distance_lookups = 0;
  double lookups_per_query = 0.0;
  std::uint64_t host_bytes = 0;
  double host_seconds = 0.0;
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["queries"] = r.queries;
  j["batches"] = r.batches;
  if (r.has_truth) j["recall_at_k"] = r.recall;
  else j["recall_at_k"] = nullptr;
  j["simulated_qps"] = r.simulated_qps;
  j["makespan_cycles"] = r.makespan_cycles;
  for (std::size_t s = 0; s < kStageCount; ++s) j["breakdown"][std::string(kStageNames[s])] = r.breakdown[s];
  j["placement"] = {{"threshold", r.placement_threshold},
                    {"workload_cv", r.placement_cv},
                    {"workload_max_over_mean", r.placement_max_over_mean},
                    {"stored_max_over_mean", r.stored_max_over_mean},
                    {"replicas", r.replicas}};
  j["schedule"] = {{"workload_cv_mean", r.schedule_cv_mean}, {"workload_cv_max", r.schedule_cv_max}};
  j["cooccur"] = {{"enabled", r.cooccur},
                  {"adopted_clusters", r.adopted_clusters},
                  {"mean_length_reduction", r.mean_reduction}};
  j["lookups"] = {{"distance_total", r.distance_lookups}, {"per_query", r.lookups_per_query}};
  j["host"] = {{"bytes", r.host_bytes}, {"seconds", r.host_seconds}};
  return j;
}

inline std::string summary_text(const RunReport& r) {
  std::ostringstream os;
  char buf[160];
  os << "queries            " << r.queries << " in " << r.batches << " batches\n";
  if (r.has_truth) {
    std::snprintf(buf, sizeof buf, "recall@k           %.4f\n", r.recall);
    os << buf;
  } else {
    os << "recall@k           n/a (no ground truth)\n";
  }
  std::snprintf(buf, sizeof buf, "simulated QPS      %.1f\n", r.simulated_qps);
  os << buf;
  os << "breakdown         ";
  for (std::size_t s = 0; s < kStageCount; ++s) {
    std::snprintf(buf, sizeof buf, " %s=%.3f", std::string(kStageNames[s]).c_str(), r.breakdown[s]);
    os << buf;
  }
  os << '\n';
  std::snprintf(buf, sizeof buf, "placement          thld=%.2f cv=%.4f max/mean=%.3f replicas=%zu\n",
                r.placement_threshold, r.placement_cv, r.placement_max_over_mean, r.replicas);
  os << buf;
  std::snprintf(buf, sizeof buf, "scheduling         cv mean=%.4f max=%.4f\n", r.schedule_cv_mean, r.schedule_cv_max);
  os << buf;
  if (r.cooccur) {
    std::snprintf(buf, sizeof buf, "co-occurrence      adopted=%zu mean reduction=%.3f\n", r.adopted_clusters,
                  r.mean_reduction);
    os << buf;
  } else {
    os << "co-occurrence      off\n";
  }
  std::snprintf(buf, sizeof buf, "lookups            %llu total, %.0f per query\n",
                static_cast<unsigned long long>(r.distance_lookups), r.lookups_per_query);
  os << buf;
  std::snprintf(buf, sizeof buf, "host transfer      %llu bytes, %.6f s\n",
                static_cast<unsigned long long>(r.host_bytes), r.host_seconds);
  os << buf;
  return os.str();
}

/// Per-DPU, per-stage cycle and lookup totals parsed back from a cost CSV.
inline std::vector<StageCosts> read_cost_csv(std::istream& is) {
  std::vector<StageCosts> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::string f[7];
    for (auto& x : f) std::getline(ss, x, ',');
    try {
      const std::size_t d = std::stoull(f[0]);
      std::size_t s = kStageCount;
      for (std::size_t i = 0; i < kStageCount; ++i)
        if (f[1] == kStageNames[i]) s = i;
      if (s == kStageCount) fail(errc::format_error, "unknown stage '" + f[1] + "'");
      if (d >= out.size()) out.resize(d + 1);
      auto& c = out[d][s];
      c.cycles = std::stod(f[2]);
      c.instructions = std::stod(f[3]);
      c.mram_reads = std::stoull(f[4]);
      c.mram_bytes = std::stoull(f[5]);
      c.wram_lookups = std::stoull(f[6]);
    } catch (const std::logic_error&) {
      fail(errc::format_error, "bad cost row " + std::to_string(lineno));
    }
  }
  return out;
}

inline RunReport stage_report(const RunConfig& cfg, ArtifactTracker& out) {
  RunReport r;
  const auto w = tagged("data", [&] { return load_workload(cfg); });
  const auto index = load_run_index(out);
  ClusterStats st;
  const auto plan = load_run_placement(out, index, &st);
  const auto sizes = cluster_sizes(index);

  const auto bal = balance_metrics(plan);
  r.placement_threshold = plan.threshold;
  r.placement_cv = bal.workload_cv;
  r.placement_max_over_mean = bal.workload_max_over_mean;
  r.stored_max_over_mean = bal.stored_max_over_mean;
  for (const auto& reps : plan.replicas) r.replicas += reps.size();

  r.cooccur = cfg.cooccur;
  if (cfg.cooccur) {
    const auto cc = load_run_cooccur(out, cfg);
    double red = 0.0;
    for (const auto& c : cc) {
      const auto ls = length_stats(c.vectors, index.pq.m(), cfg.cooccur_threshold);
      red += ls.reduction;
      r.adopted_clusters += ls.adopted ? 1 : 0;
    }
    r.mean_reduction = cc.empty() ? 0.0 : red / static_cast<double>(cc.size());
  }

  StageCosts totals{};
  double cv_sum = 0.0;
  for (std::size_t b = 0, first = 0; first < w.queries.rows(); ++b, first += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, w.queries.rows() - first);
    const auto per_dpu = tagged("artifacts", [&] {
      std::ifstream in(out.path(batch_name("cost_batch", b, "csv")));
      if (!in) fail(errc::format_error, "missing " + batch_name("cost_batch", b, "csv"));
      return read_cost_csv(in);
    });
    double makespan = 0.0;
    for (const auto& d : per_dpu) {
      makespan = std::max(makespan, total_cycles(d));
      totals += d;
    }
    r.makespan_cycles += makespan;
    const auto summary = tagged("artifacts", [&] {
      std::ifstream in(out.path(batch_name("batch", b, "json")));
      if (!in) fail(errc::format_error, "missing " + batch_name("batch", b, "json"));
      return nlohmann::json::parse(in);
    });
    r.host_bytes += summary.at("host_bytes").get<std::uint64_t>();
    r.host_seconds += summary.at("host_seconds").get<double>();
    const auto sched = tagged("artifacts", [&] {
      std::ifstream in(out.path(batch_name("schedule_batch", b, "csv")));
      return read_schedule_csv(in, cfg.ndpu, sizes);
    });
    const double cv = schedule_metrics(sched).workload_cv;
    cv_sum += cv;
    r.schedule_cv_max = std::max(r.schedule_cv_max, cv);
    r.queries += count;
    ++r.batches;
  }
  r.schedule_cv_mean = r.batches ? cv_sum / static_cast<double>(r.batches) : 0.0;
  r.simulated_qps = r.makespan_cycles > 0.0
                        ? static_cast<double>(r.queries) * cfg.model.clock_hz / r.makespan_cycles
                        : 0.0;
  const double sum = total_cycles(totals);
  for (std::size_t s = 0; s < kStageCount; ++s) r.breakdown[s] = sum > 0.0 ? totals[s].cycles / sum : 0.0;
  r.distance_lookups = totals[static_cast<std::size_t>(Stage::distance_calc)].wram_lookups;
  r.lookups_per_query = r.queries ? static_cast<double>(r.distance_lookups) / static_cast<double>(r.queries) : 0.0;

  const auto results = tagged("artifacts", [&] {
    std::ifstream in(out.path("results.csv"));
    if (!in) fail(errc::format_error, "missing results.csv");
    return read_results_csv(in);
  });
  auto truth = ground_truth(cfg, w);
  if (!truth.empty()) {
    if (cfg.groundtruth.empty()) {
      Matrix<std::int32_t> gt(truth.size(), cfg.k);
      for (std::size_t q = 0; q < truth.size(); ++q)
        for (std::size_t j = 0; j < cfg.k; ++j) gt(q, j) = static_cast<std::int32_t>(truth[q][j]);
      auto os = out.create("groundtruth.ivecs", true);
      write_vecs(os, gt);
    }
    double rec = 0.0;
    for (std::size_t q = 0; q < truth.size(); ++q) {
      std::size_t hit = 0;
      if (q < results.size())
        for (const auto& n : results[q])
          hit += std::count(truth[q].begin(), truth[q].end(), n.id) > 0 ? 1 : 0;
      rec += static_cast<double>(hit) / static_cast<double>(truth[q].size());
    }
    r.has_truth = true;
    r.recall = rec / static_cast<double>(truth.size());
  }

  {
    auto os = out.create("report.json");
    os << to_json(r).dump(2) << '\n';
  }
  auto os = out.create("summary.txt");
  os << summary_text(r);
  return r;
}

/// All stages in order. On failure every file written by this run is removed.
inline RunReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  ArtifactTracker out(cfg.output_dir);
  try {
    {
      auto os = out.create("config.txt");
      os << cfg.to_text();
    }
    stage_train(cfg, out);
    stage_place(cfg, out);
    stage_schedule(cfg, out);
    stage_simulate(cfg, out);
    return stage_report(cfg, out);
  } catch (...) {
    out.remove_all();
    throw;
  }
}

// ---------------------------------------------------------------------------
// Scaling projection

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double predict(double ndpu) const noexcept { return intercept + slope * ndpu; }
};

/// Ordinary least squares of QPS on DPU count.
inline ScalingFit project_scaling(std::span<const std::pair<double, double>> measured) {
  require(measured.size() >= 3, errc::invalid_argument,
          "scaling projection needs at least 3 points, got " + std::to_string(measured.size()));
  const double n = static_cast<double>(measured.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : measured) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : measured) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  require(sxx > 0.0, errc::invalid_argument, "scaling projection needs distinct DPU counts");
  ScalingFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (const auto& [x, y] : measured) {
    const double e = y - f.predict(x);
    ss_res += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

}  // namespace pimann

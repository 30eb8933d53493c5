#pragma once

// Flat key=value run configuration. Lines starting with '#' are comments.
// Unknown keys and malformed values are config errors.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pimann/dpu_sim.hpp"
#include "pimann/error.hpp"

namespace pimann {

enum class DataKind { structured, blobs };
enum class SchedulePolicy { greedy, first };

struct RunConfig {
  // Data. An empty base path selects the synthetic generator.
  std::string base;
  std::string query;
  std::string groundtruth;
  std::size_t max_rows = 0;
  DataKind synth_kind = DataKind::structured;
  std::size_t synth_n = 10000;
  std::size_t synth_queries = 200;
  std::size_t synth_dim = 128;
  std::size_t gt_cap = 2000000;  // brute-force ground truth only below this many base rows

  // Index.
  std::size_t nclusters = 64;
  std::size_t m = 16;
  std::size_t kstar = 256;
  std::size_t kmeans_iterations = 25;

  // Search.
  std::size_t nprobe = 8;
  std::size_t k = 10;
  std::size_t batch_size = 1000;

  // Placement and scheduling.
  std::size_t ndpu = 64;
  std::size_t max_dpu_size = 0;  // 0: MRAM capacity / bytes per stored vector
  std::size_t max_replicas = 0;  // 0: unbounded; 1 disables replication
  bool colocate_neighbors = true;
  SchedulePolicy scheduling = SchedulePolicy::greedy;
  std::size_t history_batches = 10;

  // Co-occurrence encoding.
  bool cooccur = false;
  std::size_t cooccur_slots = 256;
  std::size_t cooccur_window = 4;
  std::size_t cooccur_min_support = 2;
  double cooccur_threshold = 0.5;

  // Simulator.
  std::size_t threads = 11;
  std::size_t buffer_vectors = 16;
  DpuModel model;

  std::uint64_t seed = 1;
  std::string output_dir = "out";

  void validate() const;
  std::string to_text() const;
};

namespace detail {

struct ConfigKey {
  const char* name;
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) fail(errc::config_error, "bad value for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  fail(errc::config_error, "bad boolean for " + key + ": '" + v + "'");
}

template <typename M>
ConfigKey size_key(const char* name, const char* doc, M RunConfig::*field) {
  return {name, doc, [field](const RunConfig& c) { return std::to_string(c.*field); },
          [field, name](RunConfig& c, const std::string& v) { c.*field = parse_number<M>(name, v); }};
}

inline ConfigKey real_key(const char* name, const char* doc, std::function<double&(RunConfig&)> ref) {
  return {name, doc, [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(name, v); }};
}

inline ConfigKey bool_key(const char* name, const char* doc, bool RunConfig::*field) {
  return {name, doc, [field](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); },
          [field, name](RunConfig& c, const std::string& v) { c.*field = parse_bool(name, v); }};
}

inline ConfigKey string_key(const char* name, const char* doc, std::string RunConfig::*field) {
  return {name, doc, [field](const RunConfig& c) { return c.*field; },
          [field](RunConfig& c, const std::string& v) { c.*field = v; }};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(string_key("base", "base vectors (.fvecs/.bvecs/.ivecs); empty = synthetic", &RunConfig::base));
    k.push_back(string_key("query", "query vectors", &RunConfig::query));
    k.push_back(string_key("groundtruth", "ground-truth ids (.ivecs); empty = brute force", &RunConfig::groundtruth));
    k.push_back(size_key("max_rows", "read at most this many base rows (0 = all)", &RunConfig::max_rows));
    k.push_back({"synth_kind", "synthetic generator: structured | blobs",
                 [](const RunConfig& c) {
                   return std::string(c.synth_kind == DataKind::structured ? "structured" : "blobs");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "structured") c.synth_kind = DataKind::structured;
                   else if (v == "blobs") c.synth_kind = DataKind::blobs;
                   else fail(errc::config_error, "bad value for synth_kind: '" + v + "'");
                 }});
    k.push_back(size_key("synth_n", "synthetic base rows", &RunConfig::synth_n));
    k.push_back(size_key("synth_queries", "synthetic queries", &RunConfig::synth_queries));
    k.push_back(size_key("synth_dim", "synthetic dimensionality", &RunConfig::synth_dim));
    k.push_back(size_key("gt_cap", "largest base for on-the-fly ground truth", &RunConfig::gt_cap));
    k.push_back(size_key("nclusters", "coarse clusters |C|", &RunConfig::nclusters));
    k.push_back(size_key("m", "PQ subquantizers M", &RunConfig::m));
    k.push_back(size_key("kstar", "codewords per subquantizer", &RunConfig::kstar));
    k.push_back(size_key("kmeans_iterations", "Lloyd iterations", &RunConfig::kmeans_iterations));
    k.push_back(size_key("nprobe", "clusters scanned per query", &RunConfig::nprobe));
    k.push_back(size_key("k", "neighbors returned", &RunConfig::k));
    k.push_back(size_key("batch_size", "queries per batch", &RunConfig::batch_size));
    k.push_back(size_key("ndpu", "simulated DPUs", &RunConfig::ndpu));
    k.push_back(size_key("max_dpu_size", "vectors per DPU (0 = from MRAM size)", &RunConfig::max_dpu_size));
    k.push_back(size_key("max_replicas", "replica cap per cluster (0 = none, 1 = no replication)",
                         &RunConfig::max_replicas));
    k.push_back(bool_key("colocate_neighbors", "co-locate nearby clusters", &RunConfig::colocate_neighbors));
    k.push_back({"scheduling", "replica choice: greedy | first",
                 [](const RunConfig& c) {
                   return std::string(c.scheduling == SchedulePolicy::greedy ? "greedy" : "first");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "greedy") c.scheduling = SchedulePolicy::greedy;
                   else if (v == "first") c.scheduling = SchedulePolicy::first;
                   else fail(errc::config_error, "bad value for scheduling: '" + v + "'");
                 }});
    k.push_back(size_key("history_batches", "batches used to estimate cluster frequencies",
                         &RunConfig::history_batches));
    k.push_back(bool_key("cooccur", "co-occurrence re-encoding", &RunConfig::cooccur));
    k.push_back(size_key("cooccur_slots", "cached combinations per cluster", &RunConfig::cooccur_slots));
    k.push_back(size_key("cooccur_window", "column window for combinations", &RunConfig::cooccur_window));
    k.push_back(size_key("cooccur_min_support", "minimum combination count", &RunConfig::cooccur_min_support));
    k.push_back(real_key("cooccur_threshold", "adopt when length reduction exceeds this",
                         [](RunConfig& c) -> double& { return c.cooccur_threshold; }));
    k.push_back(size_key("threads", "threads per DPU", &RunConfig::threads));
    k.push_back(size_key("buffer_vectors", "vectors per MRAM read", &RunConfig::buffer_vectors));
    k.push_back(size_key("seed", "random seed", &RunConfig::seed));
    k.push_back(string_key("output_dir", "artifact directory", &RunConfig::output_dir));

    auto model_size = [&](const char* name, const char* doc, std::size_t DpuModel::*f) {
      k.push_back({name, doc, [f](const RunConfig& c) { return std::to_string(c.model.*f); },
                   [f, name](RunConfig& c, const std::string& v) {
                     c.model.*f = parse_number<std::size_t>(name, v);
                   }});
    };
    auto model_real = [&](const char* name, const char* doc, std::function<double&(DpuModel&)> ref) {
      k.push_back(real_key(name, doc, [ref](RunConfig& c) -> double& { return ref(c.model); }));
    };
    model_size("model.wram_bytes", "WRAM per DPU", &DpuModel::wram_bytes);
    model_size("model.mram_bytes", "MRAM per DPU", &DpuModel::mram_bytes);
    model_size("model.max_threads", "hardware threads", &DpuModel::max_threads);
    model_size("model.pipeline_depth", "pipeline stages", &DpuModel::pipeline_depth);
    model_size("model.dispatch_interval", "cycles between one thread's instructions",
               &DpuModel::dispatch_interval);
    model_size("model.min_transfer", "smallest MRAM read", &DpuModel::min_transfer);
    model_size("model.max_transfer", "largest MRAM read", &DpuModel::max_transfer);
    model_size("model.transfer_alignment", "MRAM read alignment", &DpuModel::transfer_alignment);
    model_real("model.clock_hz", "DPU clock", [](DpuModel& m) -> double& { return m.clock_hz; });
    model_real("model.dma_cycles_per_byte", "DMA occupancy", [](DpuModel& m) -> double& {
      return m.dma_cycles_per_byte;
    });
    model_real("model.host_bandwidth", "host link bytes/s", [](DpuModel& m) -> double& {
      return m.host_bandwidth;
    });
    model_real("model.launch_overhead_s", "per-launch overhead", [](DpuModel& m) -> double& {
      return m.launch_overhead_s;
    });
    model_real("model.latency.base_cycles", "MRAM read base latency", [](DpuModel& m) -> double& {
      return m.latency.base_cycles;
    });
    model_real("model.latency.small_slope", "cycles per 8B below the plateau",
               [](DpuModel& m) -> double& { return m.latency.small_slope; });
    model_real("model.latency.per_8byte_cycles", "cycles per 8B above the plateau",
               [](DpuModel& m) -> double& { return m.latency.per_8byte_cycles; });
    k.push_back({"model.latency.plateau_bytes", "end of the flat latency region",
                 [](const RunConfig& c) { return std::to_string(c.model.latency.plateau_bytes); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.latency.plateau_bytes = parse_number<std::size_t>("model.latency.plateau_bytes", v);
                 }});
    auto weight = [&](const char* name, double CostWeights::*f) {
      model_real(name, "cost weight", [f](DpuModel& m) -> double& { return m.weights.*f; });
    };
    weight("model.weights.add", &CostWeights::add);
    weight("model.weights.mul_factor", &CostWeights::mul_factor);
    weight("model.weights.lookup", &CostWeights::lookup);
    weight("model.weights.point_overhead", &CostWeights::point_overhead);
    weight("model.weights.transfer_setup", &CostWeights::transfer_setup);
    weight("model.weights.heap_level", &CostWeights::heap_level);
    weight("model.weights.lut_store", &CostWeights::lut_store);
    weight("model.weights.partial_member", &CostWeights::partial_member);
    weight("model.weights.partial_store", &CostWeights::partial_store);
    weight("model.weights.semaphore", &CostWeights::semaphore);
    weight("model.weights.barrier_cycles", &CostWeights::barrier_cycles);
    return k;
  }();
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) fail(errc::config_error, std::string(name) + " must be positive");
  };
  positive(nclusters, "nclusters");
  positive(m, "m");
  positive(kstar, "kstar");
  positive(nprobe, "nprobe");
  positive(k, "k");
  positive(batch_size, "batch_size");
  positive(ndpu, "ndpu");
  positive(history_batches, "history_batches");
  positive(threads, "threads");
  positive(buffer_vectors, "buffer_vectors");
  positive(cooccur_slots, "cooccur_slots");
  positive(cooccur_window, "cooccur_window");
  positive(kmeans_iterations, "kmeans_iterations");
  if (kstar > 256) fail(errc::config_error, "kstar must be at most 256");
  if (nprobe > nclusters) fail(errc::config_error, "nprobe exceeds nclusters");
  if (threads > model.max_threads) fail(errc::config_error, "threads exceeds model.max_threads");
  if (!(model.clock_hz > 0.0)) fail(errc::config_error, "model.clock_hz must be positive");
  if (base.empty()) {
    positive(synth_n, "synth_n");
    positive(synth_queries, "synth_queries");
    positive(synth_dim, "synth_dim");
    if (synth_dim % m != 0) fail(errc::config_error, "synth_dim must be divisible by m");
  } else {
    auto exists = [](const std::string& p) { return std::ifstream(p).good(); };
    if (!exists(base)) fail(errc::config_error, "base file not found: " + base);
    if (query.empty() || !exists(query)) fail(errc::config_error, "query file not found: " + query);
    if (!groundtruth.empty() && !exists(groundtruth))
      fail(errc::config_error, "groundtruth file not found: " + groundtruth);
  }
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& key : detail::config_keys()) os << key.name << '=' << key.get(*this) << '\n';
  return os.str();
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys())
    if (key == k.name) {
      k.set(cfg, value);
      return;
    }
  fail(errc::config_error, "unknown config key '" + key + "'");
}

inline RunConfig parse_config(std::istream& is, RunConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(errc::config_error, "line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text, RunConfig cfg = {}) {
  std::istringstream is(text);
  return parse_config(is, std::move(cfg));
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::config_error, "cannot open config " + path);
  return parse_config(in);
}

/// `key  description` per line, for --help style listings.
inline std::string describe_config_keys() {
  std::string out;
  for (const auto& k : detail::config_keys()) out += std::string(k.name) + "  " + k.doc + "\n";
  return out;
}

}  // namespace pimann

// pimann: command-line driver for the PIM vector-search workbench.
//
//   pimann run      -c run.cfg            whole pipeline
//   pimann train|place|schedule|simulate|report -c run.cfg
//   pimann search   -c run.cfg            host-side IVFPQ reference search
//   pimann project  --point 8:1200 --point 16:2390 ... --target 2560
//   pimann gen      -c run.cfg --dir data  write the synthetic set as .fvecs/.ivecs
//   pimann keys                            list config keys
//
// Exit codes: 0 success, 1 config error, 2 runtime error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pimann/pipeline.hpp"

namespace {

using namespace pimann;

struct CommonOpts {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
};

void add_common(CLI::App* app, CommonOpts& o) {
  app->add_option("-c,--config", o.config, "config file (key=value lines)");
  app->add_option("-s,--set", o.overrides, "override one key, e.g. --set nprobe=16");
  app->add_option("-o,--output", o.output_dir, "artifact directory (overrides output_dir)");
}

RunConfig resolve(const CommonOpts& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(errc::config_error, "--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  cfg.validate();
  return cfg;
}

// One stage against an existing output directory; its own writes are
// removed if it fails.
template <typename F>
void run_stage(const RunConfig& cfg, F&& stage) {
  ArtifactTracker out(cfg.output_dir);
  try {
    stage(cfg, out);
  } catch (...) {
    out.remove_all();
    throw;
  }
}

void cmd_search(const RunConfig& cfg) {
  ArtifactTracker out(cfg.output_dir);
  try {
    const auto w = tagged("data", [&] { return load_workload(cfg); });
    const auto index = load_run_index(out);
    std::vector<std::vector<Neighbor>> results;
    for (std::size_t q = 0; q < w.queries.rows(); ++q)
      results.push_back(tagged("core_index", [&] { return search_ivfpq(index, w.queries.row(q), cfg.nprobe, cfg.k); }));
    {
      auto os = out.create("host_results.csv");
      write_results_csv(os, results);
    }
    const auto truth = ground_truth(cfg, w);
    if (!truth.empty()) {
      double rec = 0.0;
      for (std::size_t q = 0; q < truth.size(); ++q) {
        auto ids = ids_of(results[q]);
        ids.resize(truth[q].size(), UINT32_MAX);
        rec += recall_at_k(ids, truth[q]);
      }
      std::printf("host recall@%zu %.4f over %zu queries\n", cfg.k, rec / static_cast<double>(truth.size()),
                  truth.size());
    } else {
      std::printf("searched %zu queries (no ground truth)\n", results.size());
    }
  } catch (...) {
    out.remove_all();
    throw;
  }
}

void cmd_gen(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto w = load_workload(cfg);
  const auto base = (std::filesystem::path(dir) / "base.fvecs").string();
  const auto query = (std::filesystem::path(dir) / "query.fvecs").string();
  const auto gt = (std::filesystem::path(dir) / "groundtruth.ivecs").string();
  write_vecs(base, w.base);
  write_vecs(query, w.queries);
  const auto truth = ground_truth(cfg, w);
  Matrix<std::int32_t> m(truth.size(), cfg.k);
  for (std::size_t q = 0; q < truth.size(); ++q)
    for (std::size_t j = 0; j < cfg.k; ++j) m(q, j) = static_cast<std::int32_t>(truth[q][j]);
  write_vecs(gt, m);
  std::printf("wrote %s (%zu x %zu), %s (%zu), %s\n", base.c_str(), w.base.rows(), w.base.dim(), query.c_str(),
              w.queries.rows(), gt.c_str());
}

std::pair<double, double> parse_point(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) fail(errc::config_error, "--point expects ndpu:qps, got '" + s + "'");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::logic_error&) {
    fail(errc::config_error, "--point expects ndpu:qps, got '" + s + "'");
  }
}

void cmd_project(const CommonOpts& common, const std::vector<std::string>& points,
                 const std::vector<std::size_t>& ndpus, double target) {
  std::vector<std::pair<double, double>> measured;
  for (const auto& p : points) measured.push_back(parse_point(p));
  if (!ndpus.empty()) {
    const RunConfig base = resolve(common);
    for (auto n : ndpus) {
      RunConfig cfg = base;
      cfg.ndpu = n;
      cfg.output_dir = (std::filesystem::path(base.output_dir) / ("ndpu_" + std::to_string(n))).string();
      const auto r = run_pipeline(cfg);
      std::printf("ndpu=%zu simulated_qps=%.2f\n", n, r.simulated_qps);
      measured.emplace_back(static_cast<double>(n), r.simulated_qps);
    }
  }
  const auto fit = project_scaling(measured);
  std::printf("slope=%.6g intercept=%.6g r2=%.6f\n", fit.slope, fit.intercept, fit.r2);
  if (target > 0.0) std::printf("predicted_qps@%g=%.6g\n", target, fit.predict(target));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PIM vector-search workbench: IVFPQ on a simulated DPU system"};
  app.require_subcommand(1);

  CommonOpts common;
  auto* run = app.add_subcommand("run", "train, place, schedule, simulate and report");
  auto* train = app.add_subcommand("train", "train the index and mine combinations");
  auto* place = app.add_subcommand("place", "estimate frequencies and place clusters");
  auto* sched = app.add_subcommand("schedule", "assign filtered queries to replicas");
  auto* sim = app.add_subcommand("simulate", "simulate batches on the DPU model");
  auto* report = app.add_subcommand("report", "recompute the run report from artifacts");
  auto* search = app.add_subcommand("search", "host-side reference search with a trained index");
  auto* gen = app.add_subcommand("gen", "write the synthetic dataset to disk");
  auto* project = app.add_subcommand("project", "linear fit of QPS against DPU count");
  auto* keys = app.add_subcommand("keys", "list config keys");
  for (auto* sc : {run, train, place, sched, sim, report, search, gen, project}) add_common(sc, common);

  std::string gen_dir = "data";
  gen->add_option("--dir", gen_dir, "destination directory");
  std::vector<std::string> points;
  std::vector<std::size_t> ndpus;
  double target = 0.0;
  project->add_option("--point", points, "measured ndpu:qps pair (repeatable)");
  project->add_option("--measure", ndpus, "run the pipeline at these DPU counts")->delimiter(',');
  project->add_option("--target", target, "DPU count to predict");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*keys) {
      std::cout << describe_config_keys();
    } else if (*project) {
      cmd_project(common, points, ndpus, target);
    } else {
      const RunConfig cfg = resolve(common);
      if (*run) {
        const auto r = run_pipeline(cfg);
        std::cout << summary_text(r);
      } else if (*train) {
        run_stage(cfg, stage_train);
      } else if (*place) {
        run_stage(cfg, stage_place);
      } else if (*sched) {
        run_stage(cfg, stage_schedule);
      } else if (*sim) {
        run_stage(cfg, stage_simulate);
      } else if (*report) {
        RunReport r;
        run_stage(cfg, [&](const RunConfig& c, ArtifactTracker& out) { r = stage_report(c, out); });
        std::cout << summary_text(r);
      } else if (*search) {
        cmd_search(cfg);
      } else if (*gen) {
        cmd_gen(cfg, gen_dir);
      }
    }
  } catch (const Error& e) {
    std::cerr << "pimann: " << e.what() << '\n';
    return e.code() == errc::config_error ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "pimann: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

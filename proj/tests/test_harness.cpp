#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "pimann/artifacts.hpp"
#include "pimann/config.hpp"
#include "pimann/io.hpp"
#include "pimann/pipeline.hpp"

namespace {

using namespace pimann;
namespace fs = std::filesystem;

std::string bytes_le(std::initializer_list<std::uint32_t> words) {
  std::string s;
  for (auto w : words)
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((w >> (8 * i)) & 0xff));
  return s;
}

std::uint32_t f32_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pimann_test_" + name);
  fs::remove_all(p);
  return p;
}

// ---------------------------------------------------------------------------
// vecs files

TEST(Vecs, OneFloatRecord) {
  std::istringstream in(bytes_le({3, f32_bits(1.5f), f32_bits(-2.0f), f32_bits(0.25f)}));
  const auto m = read_vecs<float>(in);
  ASSERT_EQ(m.rows(), 1u);
  ASSERT_EQ(m.dim(), 3u);
  EXPECT_EQ(m(0, 0), 1.5f);
  EXPECT_EQ(m(0, 1), -2.0f);
  EXPECT_EQ(m(0, 2), 0.25f);
}

TEST(Vecs, ByteAndIntRecords) {
  std::string b = bytes_le({2});
  b += std::string{'\x07', '\xff'};
  b += bytes_le({2});
  b += std::string{'\x00', '\x01'};
  std::istringstream bin(b);
  const auto m = read_vecs<std::uint8_t>(bin);
  ASSERT_EQ(m.rows(), 2u);
  EXPECT_EQ(m(0, 1), 255);
  EXPECT_EQ(m(1, 1), 1);
  std::istringstream iin(bytes_le({1, 0xffffffffu}));
  EXPECT_EQ(read_vecs<std::int32_t>(iin)(0, 0), -1);
}

TEST(Vecs, DimensionMismatchNamesRecord) {
  std::istringstream in(bytes_le({1, 5, 1, 6, 2, 7, 8}));
  try {
    read_vecs<std::int32_t>(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::format_error);
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("offset 16"), std::string::npos);
  }
}

TEST(Vecs, Truncation) {
  std::string full = bytes_le({4, 1, 2, 3, 4});
  for (std::size_t cut = 1; cut < full.size(); ++cut) {
    std::istringstream in(full.substr(0, cut));
    EXPECT_THROW(read_vecs<std::int32_t>(in), Error) << cut;
  }
  std::istringstream neg(bytes_le({0xffffffffu}));
  EXPECT_THROW(read_vecs<float>(neg), Error);
}

TEST(Vecs, EmptyAndMaxRows) {
  std::istringstream empty("");
  EXPECT_EQ(read_vecs<float>(empty).rows(), 0u);
  std::istringstream in(bytes_le({1, 5, 1, 6, 1, 7}));
  EXPECT_EQ(read_vecs<std::int32_t>(in, 2).rows(), 2u);
}

TEST(Vecs, ByteExactRoundTrip) {
  std::mt19937 rng(4);
  Matrix<float> m(17, 5);
  for (auto& v : m.values()) v = std::uniform_real_distribution<float>(-1e6f, 1e6f)(rng);
  std::ostringstream os;
  write_vecs(os, m);
  std::istringstream is(os.str());
  const auto back = read_vecs<float>(is);
  const auto bv = back.values();
  const auto mv = m.values();
  EXPECT_TRUE(std::equal(bv.begin(), bv.end(), mv.begin(), mv.end()));
  std::ostringstream again;
  write_vecs(again, back);
  EXPECT_EQ(again.str(), os.str());
  EXPECT_EQ(os.str().size(), 17u * (4 + 5 * 4));
}

TEST(Vecs, MissingFile) {
  EXPECT_THROW(read_dataset("/nonexistent/x.fvecs"), Error);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.nprobe = 13;
  c.cooccur = true;
  c.cooccur_threshold = 0.37;
  c.scheduling = SchedulePolicy::first;
  c.output_dir = "somewhere";
  const auto back = parse_config_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.nprobe, 13u);
  EXPECT_TRUE(back.cooccur);
  EXPECT_EQ(back.scheduling, SchedulePolicy::first);
}

TEST(Config, CommentsAndWhitespace) {
  const auto c = parse_config_text("# hello\n\n  nprobe =  4 \nk=5\n");
  EXPECT_EQ(c.nprobe, 4u);
  EXPECT_EQ(c.k, 5u);
}

TEST(Config, Errors) {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return errc::invalid_argument;
  };
  EXPECT_EQ(code_of([] { parse_config_text("bogus=1"); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("nprobe"); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("nprobe=abc"); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("cooccur=maybe"); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("nprobe=0").validate(); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("nclusters=4\nnprobe=8").validate(); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("kstar=300").validate(); }), errc::config_error);
  EXPECT_EQ(code_of([] { parse_config_text("base=/nonexistent.fvecs").validate(); }), errc::config_error);
  EXPECT_EQ(code_of([] { load_config("/nonexistent.cfg"); }), errc::config_error);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

// ---------------------------------------------------------------------------
// Scaling projection

TEST(Projection, ExactLine) {
  const std::vector<std::pair<double, double>> pts{{64, 1000}, {128, 2000}, {256, 4000}};
  const auto f = project_scaling(pts);
  EXPECT_NEAR(f.slope, 1000.0 / 64, 1e-9);
  EXPECT_NEAR(f.intercept, 0.0, 1e-6);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_NEAR(f.predict(2560), 40000.0, 1e-6);
}

TEST(Projection, ConstantQps) {
  const std::vector<std::pair<double, double>> pts{{1, 5}, {2, 5}, {3, 5}, {4, 5}};
  const auto f = project_scaling(pts);
  EXPECT_NEAR(f.slope, 0.0, 1e-12);
  EXPECT_NEAR(f.predict(100), 5.0, 1e-9);
}

TEST(Projection, ClosedFormOls) {
  // x = 1,2,3; y = 1,3,2: slope 0.5, intercept 1, r2 = 0.25.
  const std::vector<std::pair<double, double>> pts{{1, 1}, {2, 3}, {3, 2}};
  const auto f = project_scaling(pts);
  EXPECT_NEAR(f.slope, 0.5, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r2, 0.25, 1e-12);
}

TEST(Projection, TooFewOrDegenerate) {
  const std::vector<std::pair<double, double>> two{{1, 1}, {2, 2}};
  const std::vector<std::pair<double, double>> same{{4, 1}, {4, 2}, {4, 3}};
  try {
    project_scaling(two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::invalid_argument);
  }
  EXPECT_THROW(project_scaling(same), Error);
}

// ---------------------------------------------------------------------------
// Artifacts

TEST(Artifacts, IndexRoundTrip) {
  BlobSpec spec;
  spec.dim = 16;
  spec.blobs = 4;
  const auto data = make_blobs(spec, 600, 1);
  IvfPqParams p;
  p.nclusters = 4;
  p.m = 4;
  p.kstar = 16;
  const auto idx = train_ivfpq(data, p);
  std::stringstream ss;
  write_index(ss, idx);
  const auto back = read_index(ss);
  std::stringstream again;
  write_index(again, back);
  EXPECT_EQ(again.str(), ss.str());
  EXPECT_EQ(search_ivfpq(back, data.row(3), 2, 5), search_ivfpq(idx, data.row(3), 2, 5));

  std::stringstream cut(ss.str().substr(0, ss.str().size() / 2));
  EXPECT_THROW(read_index(cut), Error);
  std::stringstream junk("not an index at all");
  EXPECT_THROW(read_index(junk), Error);
}

TEST(Artifacts, ResultsCsvRoundTrip) {
  const std::vector<std::vector<Neighbor>> r{{{3, 7}, {9, 1}}, {}, {{0, 4}}};
  std::stringstream ss;
  write_results_csv(ss, r);
  EXPECT_EQ(read_results_csv(ss), r);
}

// ---------------------------------------------------------------------------
// End-to-end runs

RunConfig small_run(const std::string& name) {
  RunConfig c;
  c.synth_n = 3000;
  c.synth_queries = 60;
  c.nclusters = 16;
  c.nprobe = 4;
  c.ndpu = 8;
  c.batch_size = 25;
  c.kstar = 64;
  c.output_dir = scratch(name).string();
  return c;
}

std::vector<std::vector<std::uint32_t>> result_ids(const RunConfig& c) {
  std::ifstream in(fs::path(c.output_dir) / "results.csv");
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& q : read_results_csv(in)) out.push_back(ids_of(q));
  return out;
}

TEST(Pipeline, WritesExpectedArtifacts) {
  const auto c = small_run("artifacts");
  const auto r = run_pipeline(c);
  EXPECT_EQ(r.queries, 60u);
  EXPECT_EQ(r.batches, 3u);
  for (const char* f : {"config.txt", "index.bin", "frequencies.csv", "placement.txt", "schedule_batch_000.csv",
                        "cost_batch_002.csv", "batch_001.json", "results.csv", "report.json", "summary.txt",
                        "groundtruth.ivecs"})
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / f)) << f;
  const auto j = nlohmann::json::parse(slurp(fs::path(c.output_dir) / "report.json"));
  EXPECT_EQ(j["queries"].get<std::size_t>(), 60u);
  EXPECT_GT(j["simulated_qps"].get<double>(), 0.0);
}

TEST(Pipeline, DpuResultsMatchHostSearch) {
  const auto c = small_run("host_match");
  run_pipeline(c);
  const auto w = load_workload(c);
  const auto index = load_index((fs::path(c.output_dir) / "index.bin").string());
  const auto got = result_ids(c);
  ASSERT_EQ(got.size(), w.queries.rows());
  for (std::size_t q = 0; q < w.queries.rows(); ++q)
    EXPECT_EQ(got[q], ids_of(search_ivfpq(index, w.queries.row(q), c.nprobe, c.k))) << q;
}

TEST(Pipeline, RerunIsByteIdentical) {
  auto a = small_run("rerun_a");
  auto b = small_run("rerun_b");
  run_pipeline(a);
  run_pipeline(b);
  for (const char* f : {"report.json", "results.csv", "placement.txt", "cost_batch_001.csv", "index.bin"})
    EXPECT_EQ(slurp(fs::path(a.output_dir) / f), slurp(fs::path(b.output_dir) / f)) << f;
}

TEST(Pipeline, PlacementAndSchedulingTogglesKeepResults) {
  const auto base = small_run("toggle_base");
  run_pipeline(base);
  auto norep = small_run("toggle_norep");
  norep.max_replicas = 1;
  run_pipeline(norep);
  auto first = small_run("toggle_first");
  first.scheduling = SchedulePolicy::first;
  run_pipeline(first);
  auto nocol = small_run("toggle_nocol");
  nocol.colocate_neighbors = false;
  run_pipeline(nocol);
  const auto want = result_ids(base);
  EXPECT_EQ(result_ids(norep), want);
  EXPECT_EQ(result_ids(first), want);
  EXPECT_EQ(result_ids(nocol), want);
}

TEST(Pipeline, CooccurKeepsResultsAndCutsLookups) {
  auto off = small_run("cooccur_off");
  off.synth_n = 10000;
  off.synth_queries = 50;
  off.nclusters = 16;
  off.nprobe = 4;
  off.batch_size = 50;
  auto on = off;
  on.output_dir = scratch("cooccur_on").string();
  on.cooccur = true;
  const auto r_off = run_pipeline(off);
  const auto r_on = run_pipeline(on);
  EXPECT_EQ(result_ids(on), result_ids(off));
  EXPECT_GT(r_on.adopted_clusters, 0u);
  EXPECT_LT(r_on.distance_lookups, r_off.distance_lookups);
  EXPECT_GT(r_on.mean_reduction, 0.0);
}

TEST(Pipeline, DistanceStageDominatesLargeClusters) {
  auto c = small_run("breakdown");
  c.synth_n = 24000;
  c.synth_queries = 20;
  c.nclusters = 4;
  c.nprobe = 2;
  c.kstar = 256;
  c.ndpu = 4;
  c.batch_size = 20;
  const auto r = run_pipeline(c);
  EXPECT_GT(r.breakdown[static_cast<std::size_t>(Stage::distance_calc)], 0.5);
}

TEST(Pipeline, FailureRemovesPartialOutputs) {
  auto c = small_run("failure");
  c.max_dpu_size = 10;  // far below the data size: placement cannot fit
  try {
    run_pipeline(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::infeasible_placement);
    EXPECT_NE(std::string(e.what()).find("[placement]"), std::string::npos);
  }
  std::size_t files = 0;
  if (fs::exists(c.output_dir))
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(c.output_dir)) ++files;
  EXPECT_EQ(files, 0u);
}

TEST(Pipeline, AllClustersProbedOnBlobsGivesHighRecall) {
  auto c = small_run("recall");
  c.synth_kind = DataKind::blobs;
  c.synth_dim = 32;
  c.m = 8;
  c.kstar = 256;
  c.nprobe = c.nclusters;
  const auto r = run_pipeline(c);
  ASSERT_TRUE(r.has_truth);
  EXPECT_GE(r.recall, 0.6);
}

}  // namespace

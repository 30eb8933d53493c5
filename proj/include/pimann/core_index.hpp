#pragma once

// IVFPQ building blocks: k-means coarse quantizer, product quantizer,
// residual encoding, fixed-point lookup tables and the exact reference search
// used as ground truth.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pimann/error.hpp"
#include "pimann/matrix.hpp"
#include "pimann/neighbor.hpp"

namespace pimann {

struct KMeansOptions {
  std::size_t max_iterations = 25;
  double tolerance = 1e-4;  // relative inertia change
  std::size_t seeding_trials = 0;  // candidates per k-means++ step; 0 = 2 + floor(ln k)
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Index of the row of `centers` closest to `x`; ties go to the lowest index.
inline std::size_t nearest_row(const Dataset& centers, std::span<const float> x,
                               double* best_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = l2_sqr(x, centers.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

/// D^2 sampling of one index; zero-distance points are never drawn unless all are.
inline std::size_t sample_d2(const std::vector<double>& d2, double total, std::mt19937_64& rng) {
  const std::size_t n = d2.size();
  if (!(total > 0.0)) return static_cast<std::size_t>(rng() % n);
  const double target = uniform01(rng) * total;
  double run = 0.0;
  std::size_t pick = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    run += d2[i];
    if (run > target && d2[i] > 0.0) {
      pick = i;
      break;
    }
  }
  // Rounding can leave the tail at a zero-distance point.
  while (d2[pick] == 0.0 && pick > 0) --pick;
  return pick;
}

/// Greedy k-means++: each step draws `trials` D^2 candidates and keeps the
/// one that lowers the potential most (lowest draw order on ties).
inline Dataset kmeans_plus_plus(const Dataset& data, std::size_t k, std::mt19937_64& rng,
                                std::size_t trials) {
  const std::size_t n = data.rows();
  trials = std::max<std::size_t>(trials, 1);
  Dataset centers(k, data.dim());
  std::size_t first = static_cast<std::size_t>(rng() % n);
  std::copy_n(data.row(first).begin(), data.dim(), centers.row(0).begin());

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = l2_sqr(data.row(i), centers.row(0));
  std::vector<double> cand(n), best_d2(n);

  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t best = n;
    double best_pot = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t pick = sample_d2(d2, total, rng);
      double pot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cand[i] = std::min(d2[i], l2_sqr(data.row(i), data.row(pick)));
        pot += cand[i];
      }
      if (pot < best_pot) {
        best_pot = pot;
        best = pick;
        best_d2.swap(cand);
      }
    }
    std::copy_n(data.row(best).begin(), data.dim(), centers.row(c).begin());
    d2.swap(best_d2);
  }
  return centers;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Empty clusters are re-seeded from
/// the point farthest from the centroid of the currently largest cluster.
inline Dataset kmeans(const Dataset& data, std::size_t k, std::uint64_t seed,
                      const KMeansOptions& opts = {}) {
  require(k >= 1, errc::invalid_argument, "k-means needs at least one cluster");
  require(data.dim() >= 1, errc::invalid_argument, "k-means needs D >= 1");
  require(k <= data.rows(), errc::invalid_argument,
          "requested " + std::to_string(k) + " clusters from " +
              std::to_string(data.rows()) + " points");
  require(all_finite(data.values()), errc::invalid_data,
          "k-means input contains non-finite values");

  const std::size_t n = data.rows();
  const std::size_t dim = data.dim();
  std::mt19937_64 rng(seed);
  const std::size_t trials =
      opts.seeding_trials != 0
          ? opts.seeding_trials
          : 2 + static_cast<std::size_t>(std::floor(std::log(static_cast<double>(k))));
  Dataset centers = detail::kmeans_plus_plus(data, k, rng, trials);

  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  double prev_inertia = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = detail::nearest_row(centers, data.row(i), &dist[i]);
      inertia += dist[i];
    }
    if (std::isfinite(prev_inertia)) {
      const double change = prev_inertia - inertia;
      if (prev_inertia == 0.0 || std::abs(change) <= opts.tolerance * prev_inertia)
        break;
    }
    prev_inertia = inertia;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = data.row(i);
      double* s = &sums[assign[i] * dim];
      for (std::size_t j = 0; j < dim; ++j) s[j] += x[j];
      ++counts[assign[i]];
    }

    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const std::size_t largest = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == largest && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      // Move the point so subsequent empty clusters pick a different one.
      auto x = data.row(far);
      for (std::size_t j = 0; j < dim; ++j) {
        sums[largest * dim + j] -= x[j];
        sums[c * dim + j] = x[j];
      }
      --counts[largest];
      counts[c] = 1;
      assign[far] = c;
      dist[far] = 0.0;
    }

    for (std::size_t c = 0; c < k; ++c) {
      auto row = centers.row(c);
      for (std::size_t j = 0; j < dim; ++j)
        row[j] = static_cast<float>(sums[c * dim + j] / static_cast<double>(counts[c]));
    }
  }
  return centers;
}

struct CoarseQuantizer {
  Dataset centroids;

  std::size_t nclusters() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.dim(); }
};

inline CoarseQuantizer train_coarse_quantizer(const Dataset& data, std::size_t nclusters,
                                               std::uint64_t seed,
                                               const KMeansOptions& opts = {}) {
  return CoarseQuantizer{kmeans(data, nclusters, seed, opts)};
}

struct ResidualAssignment {
  std::vector<std::uint32_t> cluster;  // per point
  Dataset residuals;
};

inline ResidualAssignment assign_and_residual(const Dataset& data, const CoarseQuantizer& cq) {
  require(data.dim() == cq.dim(), errc::invalid_argument,
          "data dim " + std::to_string(data.dim()) + " != centroid dim " +
              std::to_string(cq.dim()));
  require(cq.nclusters() >= 1, errc::invalid_argument, "empty coarse quantizer");
  ResidualAssignment out{std::vector<std::uint32_t>(data.rows()), Dataset(data.rows(), data.dim())};
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto c = detail::nearest_row(cq.centroids, data.row(i));
    out.cluster[i] = static_cast<std::uint32_t>(c);
    auto x = data.row(i);
    auto cen = cq.centroids.row(c);
    auto r = out.residuals.row(i);
    for (std::size_t j = 0; j < data.dim(); ++j) r[j] = x[j] - cen[j];
  }
  return out;
}

/// M independent sub-codebooks of kstar codewords, each dsub = D/M wide.
class PQCodebook {
 public:
  PQCodebook() = default;
  PQCodebook(std::size_t m, std::size_t kstar, std::vector<Dataset> tables)
      : m_(m), kstar_(kstar), tables_(std::move(tables)) {
    require(m_ >= 1 && tables_.size() == m_, errc::invalid_argument,
            "codebook needs one table per subquantizer");
    require(kstar_ >= 1 && kstar_ <= 256, errc::invalid_argument,
            "kstar must be in [1, 256] so codes fit one byte");
    dsub_ = tables_.front().dim();
    for (const auto& t : tables_)
      require(t.rows() == kstar_ && t.dim() == dsub_, errc::invalid_argument,
              "sub-codebook shape mismatch");
  }

  std::size_t m() const noexcept { return m_; }
  std::size_t kstar() const noexcept { return kstar_; }
  std::size_t dsub() const noexcept { return dsub_; }
  std::size_t dim() const noexcept { return m_ * dsub_; }

  const Dataset& table(std::size_t i) const { return tables_[i]; }
  std::span<const float> codeword(std::size_t i, std::size_t j) const {
    return tables_[i].row(j);
  }

  /// Size of uncompressed float vectors over size of the M-byte codes.
  double compression_rate() const noexcept {
    return static_cast<double>(4 * dim()) / static_cast<double>(m_);
  }

 private:
  std::size_t m_ = 0;
  std::size_t kstar_ = 0;
  std::size_t dsub_ = 0;
  std::vector<Dataset> tables_;
};

inline Dataset sub_columns(const Dataset& data, std::size_t offset, std::size_t width) {
  Dataset out(data.rows(), width);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto src = data.row(i).subspan(offset, width);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline PQCodebook train_pq(const Dataset& residuals, std::size_t m, std::size_t kstar,
                           std::uint64_t seed, const KMeansOptions& opts = {}) {
  require(m >= 1 && residuals.dim() % m == 0, errc::invalid_argument,
          "D=" + std::to_string(residuals.dim()) + " is not divisible by M=" +
              std::to_string(m));
  require(kstar >= 1 && kstar <= 256, errc::invalid_argument,
          "kstar must be in [1, 256], got " + std::to_string(kstar));
  const std::size_t dsub = residuals.dim() / m;
  std::vector<Dataset> tables;
  tables.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    tables.push_back(kmeans(sub_columns(residuals, i * dsub, dsub), kstar, seed + i, opts));
  return PQCodebook(m, kstar, std::move(tables));
}

struct EncodedCluster {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> codes;  // ids.size() rows of M bytes

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const std::uint8_t> code(std::size_t i, std::size_t m) const {
    return {codes.data() + i * m, m};
  }
};

struct EncodedDataset {
  std::size_t m = 0;
  std::size_t kstar = 0;
  bool residual = true;  // codes quantize x - c rather than x
  std::vector<EncodedCluster> clusters;

  std::size_t total_points() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.size();
    return n;
  }
};

inline std::uint8_t nearest_codeword(const PQCodebook& cb, std::size_t sub,
                                     std::span<const float> x) {
  return static_cast<std::uint8_t>(detail::nearest_row(cb.table(sub), x));
}

inline void encode_into(std::span<const float> residual, const PQCodebook& cb,
                        std::span<std::uint8_t> out) {
  const std::size_t dsub = cb.dsub();
  for (std::size_t i = 0; i < cb.m(); ++i)
    out[i] = nearest_codeword(cb, i, residual.subspan(i * dsub, dsub));
}

/// Points are grouped by cluster in ascending point-id order.
inline EncodedDataset encode(const Dataset& residuals,
                             std::span<const std::uint32_t> assignments,
                             std::size_t nclusters, const PQCodebook& cb) {
  require(residuals.dim() == cb.dim(), errc::invalid_argument,
          "residual dim does not match codebook");
  require(assignments.size() == residuals.rows(), errc::invalid_argument,
          "one assignment per residual row required");
  EncodedDataset out{cb.m(), cb.kstar(), true, std::vector<EncodedCluster>(nclusters)};
  std::vector<std::uint8_t> code(cb.m());
  for (std::size_t i = 0; i < residuals.rows(); ++i) {
    require(assignments[i] < nclusters, errc::invalid_argument,
            "assignment out of range at row " + std::to_string(i));
    encode_into(residuals.row(i), cb, code);
    auto& cl = out.clusters[assignments[i]];
    cl.ids.push_back(static_cast<std::uint32_t>(i));
    cl.codes.insert(cl.codes.end(), code.begin(), code.end());
  }
  return out;
}

struct ProbedCluster {
  std::uint32_t cluster;
  std::vector<float> residual;  // q - c
};

/// The nprobe closest centroids, ascending by distance then id.
inline std::vector<ProbedCluster> filter_clusters(std::span<const float> q,
                                                  const CoarseQuantizer& cq,
                                                  std::size_t nprobe) {
  require(q.size() == cq.dim(), errc::invalid_argument, "query dim mismatch");
  require(nprobe <= cq.nclusters(), errc::invalid_argument,
          "nprobe=" + std::to_string(nprobe) + " exceeds |C|=" +
              std::to_string(cq.nclusters()));
  std::vector<std::pair<double, std::uint32_t>> d(cq.nclusters());
  for (std::size_t c = 0; c < cq.nclusters(); ++c)
    d[c] = {l2_sqr(q, cq.centroids.row(c)), static_cast<std::uint32_t>(c)};
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(nprobe), d.end());
  std::vector<ProbedCluster> out;
  out.reserve(nprobe);
  for (std::size_t p = 0; p < nprobe; ++p) {
    ProbedCluster pc{d[p].second, std::vector<float>(q.size())};
    auto c = cq.centroids.row(d[p].second);
    for (std::size_t j = 0; j < q.size(); ++j) pc.residual[j] = q[j] - c[j];
    out.push_back(std::move(pc));
  }
  return out;
}

/// M x kstar table of unsigned 16-bit fixed-point partial distances.
struct Lut {
  static constexpr std::uint32_t kMaxEntry = 65535;

  std::size_t m = 0;
  std::size_t kstar = 0;
  std::vector<std::uint16_t> entries;  // flat: i * kstar + j
  double scale = 1.0;                  // fixed-point units per real unit

  std::uint16_t at(std::size_t i, std::size_t j) const { return entries[i * kstar + j]; }
  double dequantize(std::uint64_t fixed) const {
    return static_cast<double>(fixed) / scale;
  }
};

/// Real partial distances ||(qc)_i - B_i[j]||^2, flat i * kstar + j.
inline std::vector<double> lut_real_entries(std::span<const float> qc, const PQCodebook& cb) {
  require(qc.size() == cb.dim(), errc::invalid_argument,
          "LUT input has length " + std::to_string(qc.size()) + ", expected " +
              std::to_string(cb.dim()));
  require(all_finite(qc), errc::invalid_data, "LUT input contains non-finite values");
  const std::size_t dsub = cb.dsub();
  std::vector<double> real(cb.m() * cb.kstar());
  for (std::size_t i = 0; i < cb.m(); ++i) {
    auto seg = qc.subspan(i * dsub, dsub);
    for (std::size_t j = 0; j < cb.kstar(); ++j)
      real[i * cb.kstar() + j] = l2_sqr(seg, cb.codeword(i, j));
  }
  return real;
}

inline double scale_for_max(double max_entry) {
  return max_entry > 0.0 ? static_cast<double>(Lut::kMaxEntry) / max_entry : 1.0;
}

/// Quantizes with a caller-provided scale; values beyond 2^16-1 saturate.
inline Lut build_lut(std::span<const float> qc, const PQCodebook& cb, double scale) {
  require(scale > 0.0 && std::isfinite(scale), errc::invalid_argument, "LUT scale must be > 0");
  const auto real = lut_real_entries(qc, cb);
  Lut lut{cb.m(), cb.kstar(), std::vector<std::uint16_t>(real.size()), scale};
  for (std::size_t e = 0; e < real.size(); ++e) {
    const double v = std::round(real[e] * scale);
    lut.entries[e] = static_cast<std::uint16_t>(std::min(v, static_cast<double>(Lut::kMaxEntry)));
  }
  return lut;
}

/// Scale chosen so the largest real entry maps to 2^16-1.
inline Lut build_lut(std::span<const float> qc, const PQCodebook& cb) {
  const auto real = lut_real_entries(qc, cb);
  const double mx = real.empty() ? 0.0 : *std::max_element(real.begin(), real.end());
  return build_lut(qc, cb, scale_for_max(mx));
}

/// One scale shared by all of a query's probed clusters so fixed-point
/// distances from different clusters stay comparable.
inline double query_scale(std::span<const ProbedCluster> probes, const PQCodebook& cb) {
  double mx = 0.0;
  for (const auto& p : probes) {
    const auto real = lut_real_entries(p.residual, cb);
    if (!real.empty()) mx = std::max(mx, *std::max_element(real.begin(), real.end()));
  }
  return scale_for_max(mx);
}

inline std::uint32_t adc_distance(std::span<const std::uint8_t> code, const Lut& lut) {
  std::uint32_t acc = 0;
  const std::uint16_t* row = lut.entries.data();
  for (std::size_t i = 0; i < lut.m; ++i, row += lut.kstar) acc += row[code[i]];
  return acc;
}

/// Exact k nearest point ids by L2; ties go to the lower id.
inline std::vector<std::uint32_t> brute_force_topk(const Dataset& data,
                                                   std::span<const float> q,
                                                   std::size_t k) {
  require(k <= data.rows(), errc::invalid_argument,
          "k=" + std::to_string(k) + " exceeds N=" + std::to_string(data.rows()));
  require(q.size() == data.dim(), errc::invalid_argument, "query dim mismatch");
  std::vector<std::pair<double, std::uint32_t>> d(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i)
    d[i] = {l2_sqr(q, data.row(i)), static_cast<std::uint32_t>(i)};
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::uint32_t> ids(k);
  for (std::size_t i = 0; i < k; ++i) ids[i] = d[i].second;
  return ids;
}

inline double recall_at_k(std::span<const std::uint32_t> result,
                          std::span<const std::uint32_t> truth) {
  require(result.size() == truth.size(), errc::invalid_argument,
          "recall needs equal-length lists, got " + std::to_string(result.size()) +
              " and " + std::to_string(truth.size()));
  if (truth.empty()) return 1.0;
  std::vector<std::uint32_t> a(result.begin(), result.end());
  std::vector<std::uint32_t> b(truth.begin(), truth.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::uint32_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(truth.size());
}

struct IvfPqParams {
  std::size_t nclusters = 256;
  std::size_t m = 16;
  std::size_t kstar = 256;
  std::uint64_t seed = 1;
  KMeansOptions kmeans;
  std::size_t max_points_per_centroid = 256;  // training subsample cap; 0 = train on all rows
};

struct IvfPqIndex {
  CoarseQuantizer coarse;
  PQCodebook pq;
  EncodedDataset encoded;
};

/// Rows drawn without replacement (ascending order); all rows if n >= rows.
inline Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n >= data.rows()) return data;
  std::vector<std::size_t> idx(data.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (data.rows() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Dataset out(n, data.dim());
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(data.row(idx[i]).begin(), data.dim(), out.row(i).begin());
  return out;
}

/// Coarse quantizer and codebooks are trained on at most
/// max_points_per_centroid * (|C| or kstar) rows; every row is encoded.
inline IvfPqIndex train_ivfpq(const Dataset& data, const IvfPqParams& p) {
  auto cap = [&](std::size_t k) {
    return p.max_points_per_centroid == 0 ? data.rows() : p.max_points_per_centroid * k;
  };
  IvfPqIndex index;
  index.coarse = train_coarse_quantizer(sample_rows(data, cap(p.nclusters), p.seed + 17), p.nclusters,
                                        p.seed, p.kmeans);
  auto assigned = assign_and_residual(data, index.coarse);
  index.pq = train_pq(sample_rows(assigned.residuals, cap(p.kstar), p.seed + 29), p.m, p.kstar,
                      p.seed + 1000003, p.kmeans);
  index.encoded = encode(assigned.residuals, assigned.cluster, p.nclusters, index.pq);
  return index;
}

/// Classic IVFPQ search on the host: filter, build LUTs, ADC-scan, sort.
inline std::vector<Neighbor> search_ivfpq(const IvfPqIndex& index, std::span<const float> q,
                                          std::size_t nprobe, std::size_t k) {
  const auto probes = filter_clusters(q, index.coarse, nprobe);
  const double scale = query_scale(probes, index.pq);
  std::vector<Neighbor> all;
  for (const auto& p : probes) {
    const Lut lut = build_lut(p.residual, index.pq, scale);
    const auto& cl = index.encoded.clusters[p.cluster];
    for (std::size_t i = 0; i < cl.size(); ++i)
      all.push_back({adc_distance(cl.code(i, index.pq.m()), lut), cl.ids[i]});
  }
  const std::size_t kk = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end());
  all.resize(kk);
  return all;
}

}  // namespace pimann

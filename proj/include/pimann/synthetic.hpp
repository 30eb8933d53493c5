#pragma once

// Deterministic synthetic datasets.
//
// `structured`: points are a blob center plus, per subspace, one entry of a
// small pattern dictionary, mirrored in antithetic pairs (c + s, c - s) so each
// blob's mean is its center. Adjacent subspaces are grouped in threes and a
// group takes one of a few shared motifs with probability `motif_prob`, which
// gives the codes real co-occurrence. With |C| = blobs and kstar >= 2 *
// patterns, the residuals are nearly representable exactly by PQ.
//
// `blobs`: isotropic Gaussian mixture, a plain baseline with ordinary PQ error.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "pimann/error.hpp"
#include "pimann/matrix.hpp"

namespace pimann {

struct StructuredSpec {
  std::size_t dim = 128;
  std::size_t subspaces = 16;
  std::size_t blobs = 256;
  std::size_t patterns = 128;  // per subspace, before mirroring
  std::size_t motifs = 4;      // per group of three subspaces
  double motif_prob = 0.95;
  double spread = 1000.0;      // centers uniform in [0, spread)
  double pattern_scale = 10.0;
  double noise = 0.05;
  std::uint64_t structure_seed = 7;  // centers, dictionary, motifs
};

struct BlobSpec {
  std::size_t dim = 128;
  std::size_t blobs = 64;
  double spread = 1000.0;
  double sigma = 40.0;
  std::uint64_t structure_seed = 7;
};

inline Dataset make_structured(const StructuredSpec& s, std::size_t rows, std::uint64_t sample_seed) {
  require(s.subspaces > 0 && s.dim % s.subspaces == 0, errc::invalid_argument,
          "dim must be divisible by subspaces");
  require(s.blobs > 0 && s.patterns > 0 && s.motifs > 0, errc::invalid_argument,
          "structured generator needs blobs, patterns and motifs");
  const std::size_t dsub = s.dim / s.subspaces;
  const std::size_t groups = s.subspaces / 3;

  std::mt19937_64 srng(s.structure_seed);
  std::uniform_real_distribution<double> uni(0.0, s.spread);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset centers(s.blobs, s.dim);
  for (auto& v : centers.values()) v = static_cast<float>(uni(srng));
  Dataset dict(s.subspaces * s.patterns, dsub);
  for (auto& v : dict.values()) v = static_cast<float>(gauss(srng) * s.pattern_scale);
  std::vector<std::size_t> motif(groups * s.motifs * 3);
  for (auto& p : motif) p = static_cast<std::size_t>(srng() % s.patterns);

  std::mt19937_64 rng(sample_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Dataset out(rows, s.dim);
  std::vector<std::size_t> pick(s.subspaces);
  std::vector<double> offset(s.dim);
  for (std::size_t i = 0; i < rows; i += 2) {
    const std::size_t b = static_cast<std::size_t>(rng() % s.blobs);
    for (auto& p : pick) p = static_cast<std::size_t>(rng() % s.patterns);
    for (std::size_t g = 0; g < groups; ++g)
      if (coin(rng) < s.motif_prob) {
        const std::size_t t = static_cast<std::size_t>(rng() % s.motifs);
        for (std::size_t j = 0; j < 3; ++j) pick[g * 3 + j] = motif[(g * s.motifs + t) * 3 + j];
      }
    for (std::size_t sub = 0; sub < s.subspaces; ++sub)
      for (std::size_t t = 0; t < dsub; ++t) offset[sub * dsub + t] = dict(sub * s.patterns + pick[sub], t);
    for (std::size_t r = 0; r < 2 && i + r < rows; ++r) {
      auto row = out.row(i + r);
      const double sign = r == 0 ? 1.0 : -1.0;
      for (std::size_t d = 0; d < s.dim; ++d)
        row[d] = static_cast<float>(centers(b, d) + sign * offset[d] + s.noise * gauss(rng));
    }
  }
  return out;
}

inline Dataset make_blobs(const BlobSpec& s, std::size_t rows, std::uint64_t sample_seed) {
  require(s.blobs > 0 && s.dim > 0, errc::invalid_argument, "blob generator needs blobs and dim");
  std::mt19937_64 srng(s.structure_seed);
  std::uniform_real_distribution<double> uni(0.0, s.spread);
  Dataset centers(s.blobs, s.dim);
  for (auto& v : centers.values()) v = static_cast<float>(uni(srng));
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> gauss(0.0, s.sigma);
  Dataset out(rows, s.dim);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t b = static_cast<std::size_t>(rng() % s.blobs);
    auto row = out.row(i);
    for (std::size_t d = 0; d < s.dim; ++d) row[d] = static_cast<float>(centers(b, d) + gauss(rng));
  }
  return out;
}

}  // namespace pimann

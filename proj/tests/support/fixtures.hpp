#pragma once

#include <cstdint>
#include <random>

#include "synlab/evaluator.hpp"

namespace synlab::fixture {

/// Dataset carrying only labels; enough for the pair protocol.
inline Dataset label_only_dataset(std::size_t classes, std::size_t per_class) {
  Dataset ds;
  ds.class_count = classes;
  for (std::uint32_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s;
      s.label = SoftLabel::hard(c);
      s.provenance.primary = c;
      ds.samples.push_back(std::move(s));
    }
  return ds;
}

/// Rows drawn uniformly on the unit sphere.
inline RowMatrix sphere_embeddings(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix e(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) e(r, c) = n(rng);
    e.row(r).normalize();
  }
  return e;
}

/// Similarity `same` for positive pairs and `diff` for negatives.
inline std::vector<double> fixed_similarities(const PairSet& set, double same, double diff) {
  std::vector<double> sims;
  for (const Pair& p : set.pairs) sims.push_back(p.is_same ? same : diff);
  return sims;
}

}  // namespace synlab::fixture

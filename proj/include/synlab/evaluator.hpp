#pragma once

// Pair verification with 10-fold threshold selection, cross-domain accuracy
// matrices, classical (Torgerson) MDS and intra-class spread.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "synlab/error.hpp"
#include "synlab/synthesizer.hpp"
#include "synlab/trainer.hpp"

namespace synlab {

inline constexpr std::size_t kThresholdCandidates = 400;

/// Evenly spaced candidates covering [-1, 1] inclusive.
inline double threshold_candidate(std::size_t k) {
  return -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(kThresholdCandidates - 1);
}

struct FoldResult {
  double threshold = 0.0;
  double accuracy = 0.0;
  bool operator==(const FoldResult&) const = default;
};

struct VerificationReport {
  double accuracy = 0.0;
  std::vector<FoldResult> folds;
  std::size_t n_pairs = 0;
  bool operator==(const VerificationReport&) const = default;
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "cosine similarity needs equal lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

/// Accuracy of predicting "same" when similarity > threshold, over the listed pairs.
inline double threshold_accuracy(std::span<const double> sims, std::span<const Pair> pairs,
                                 std::span<const std::size_t> subset, double threshold) {
  std::size_t correct = 0;
  for (std::size_t idx : subset) correct += ((sims[idx] > threshold) == pairs[idx].is_same) ? 1 : 0;
  return subset.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(subset.size());
}

/// Best candidate threshold on `subset`; ties go to the smallest threshold.
inline FoldResult select_threshold(std::span<const double> sims, std::span<const Pair> pairs,
                                   std::span<const std::size_t> subset) {
  FoldResult best{threshold_candidate(0), -1.0};
  for (std::size_t k = 0; k < kThresholdCandidates; ++k) {
    const double t = threshold_candidate(k);
    const double acc = threshold_accuracy(sims, pairs, subset, t);
    if (acc > best.accuracy) best = {t, acc};
  }
  return best;
}

/// 10-fold protocol over precomputed pair similarities.
inline VerificationReport verify_similarities(std::span<const double> sims, const PairSet& set) {
  detail::require(sims.size() == set.pairs.size(), "one similarity per pair required");
  detail::require(!set.folds.empty(), "pair set has no folds");
  VerificationReport rep;
  rep.n_pairs = set.pairs.size();
  for (std::size_t f = 0; f < set.folds.size(); ++f) {
    detail::require(!set.folds[f].empty(), "empty verification fold");
    std::vector<std::size_t> selection;
    for (std::size_t g = 0; g < set.folds.size(); ++g)
      if (g != f) selection.insert(selection.end(), set.folds[g].begin(), set.folds[g].end());
    const FoldResult chosen = select_threshold(sims, set.pairs, selection);
    rep.folds.push_back({chosen.threshold, threshold_accuracy(sims, set.pairs, set.folds[f], chosen.threshold)});
  }
  double sum = 0.0;
  for (const auto& fr : rep.folds) sum += fr.accuracy;
  rep.accuracy = sum / static_cast<double>(rep.folds.size());
  return rep;
}

/// Cosine similarity of every pair, from per-sample embeddings.
inline std::vector<double> pair_similarities(const RowMatrix& embeddings, const PairSet& set) {
  std::vector<double> sims(set.pairs.size());
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    const Pair& p = set.pairs[i];
    detail::require(p.a < static_cast<std::size_t>(embeddings.rows()) && p.b < static_cast<std::size_t>(embeddings.rows()),
                    "pair index out of range");
    const auto a = embeddings.row(static_cast<Eigen::Index>(p.a));
    const auto b = embeddings.row(static_cast<Eigen::Index>(p.b));
    sims[i] = cosine_similarity(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
  }
  return sims;
}

inline VerificationReport verify(const EmbeddingNetwork& net, const PairSet& set, const Dataset& dataset) {
  const RowMatrix emb = embed_dataset(net, dataset);
  return verify_similarities(pair_similarities(emb, set), set);
}

// ---------------------------------------------------------------------------
// Cross-domain matrix

struct NamedNetwork {
  std::string name;
  const EmbeddingNetwork* net = nullptr;
};

struct TestSet {
  std::string name;
  Dataset dataset;
  PairSet pairs;
};

struct CrossDomainMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<VerificationReport>> cells;  // [row][column]

  double accuracy(std::size_t r, std::size_t c) const { return cells.at(r).at(c).accuracy; }
};

inline CrossDomainMatrix cross_domain_eval(std::span<const NamedNetwork> nets, std::span<const TestSet> tests) {
  CrossDomainMatrix m;
  for (const auto& t : tests) m.columns.push_back(t.name);
  for (const auto& n : nets) {
    detail::require(n.net != nullptr, "null network in cross-domain evaluation");
    m.rows.push_back(n.name);
    std::vector<VerificationReport> row;
    for (const auto& t : tests) row.push_back(verify(*n.net, t.pairs, t.dataset));
    m.cells.push_back(std::move(row));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Classical MDS

struct MdsOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-10;
};

struct Embedding2D {
  RowMatrix coordinates;  // (n x output_dim)
  std::vector<std::uint32_t> classes;
  std::vector<double> eigenvalues;  // non-increasing
  std::size_t positive_eigenvalues = 0;
  /// Fewer positive eigenvalues than output dimensions; missing axes are zero.
  bool degenerate = false;
};

/// Squared Euclidean distance matrix between rows.
inline Eigen::MatrixXd squared_distances(const RowMatrix& x) {
  const auto n = x.rows();
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d2(i, j) = d2(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  }
  return d2;
}

/// B = -1/2 J D2 J with J = I - 11^T / n.
inline Eigen::MatrixXd double_center(const Eigen::MatrixXd& d2) {
  const Eigen::VectorXd row_mean = d2.rowwise().mean();
  const Eigen::RowVectorXd col_mean = d2.colwise().mean();
  const double grand = d2.mean();
  Eigen::MatrixXd b = d2;
  b.colwise() -= row_mean;
  b.rowwise() -= col_mean;
  b.array() += grand;
  b *= -0.5;
  // Exact symmetry regardless of summation order.
  return 0.5 * (b + b.transpose());
}

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd vector;
};

/// Dominant eigenpair by power iteration from a fixed start vector. Each
/// deflation step gets its own start: reusing one would leave no component
/// along a repeated eigenvalue's second eigenvector.
inline EigenPair power_iteration(const Eigen::MatrixXd& m, const MdsOptions& opt, std::uint64_t start = 0) {
  const auto n = m.rows();
  Rng rng = make_rng(0x6d6473ULL, Stream::init, {start});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  v.normalize();
  EigenPair ep{0.0, v};
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd w = m * ep.vector;
    ep.value = ep.vector.dot(w);
    const double residual = (w - ep.value * ep.vector).norm();
    if (residual < opt.tolerance * std::max(1.0, std::abs(ep.value))) break;
    const double wn = w.norm();
    if (wn == 0.0) {
      ep.value = 0.0;
      break;
    }
    ep.vector = w / wn;
  }
  ep.value = ep.vector.dot(m * ep.vector);
  return ep;
}

inline Embedding2D classical_mds(const RowMatrix& features, std::span<const std::uint32_t> classes = {},
                                 std::size_t output_dim = 2, const MdsOptions& opt = {}) {
  const auto n = features.rows();
  detail::require(n >= 3, "classical MDS needs at least 3 points");
  detail::require(output_dim >= 1, "MDS output dimension must be >= 1");
  detail::require(classes.empty() || classes.size() == static_cast<std::size_t>(n), "one class id per point required");

  Eigen::MatrixXd b = double_center(squared_distances(features));
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff() * static_cast<double>(n));
  Embedding2D out;
  out.coordinates = RowMatrix::Zero(n, static_cast<Eigen::Index>(output_dim));
  out.classes.assign(classes.begin(), classes.end());
  for (std::size_t k = 0; k < output_dim; ++k) {
    EigenPair ep = power_iteration(b, opt, k);
    out.eigenvalues.push_back(ep.value);
    if (ep.value <= 1e-12 * scale) break;
    ++out.positive_eigenvalues;
    out.coordinates.col(static_cast<Eigen::Index>(k)) = ep.vector * std::sqrt(ep.value);
    b -= ep.value * ep.vector * ep.vector.transpose();
  }
  out.degenerate = out.positive_eigenvalues < output_dim;
  out.coordinates.rowwise() -= out.coordinates.colwise().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Intra-class spread

/// Mean Euclidean distance of each class's members to the class centroid.
inline std::map<std::uint32_t, double> intra_class_spread(const RowMatrix& features,
                                                          std::span<const std::uint32_t> classes) {
  detail::require(classes.size() == static_cast<std::size_t>(features.rows()), "one class id per row required");
  std::map<std::uint32_t, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < classes.size(); ++i) members[classes[i]].push_back(static_cast<Eigen::Index>(i));
  std::map<std::uint32_t, double> spread;
  for (const auto& [cls, rows] : members) {
    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(features.cols());
    for (Eigen::Index r : rows) centroid += features.row(r);
    centroid /= static_cast<double>(rows.size());
    double sum = 0.0;
    for (Eigen::Index r : rows) sum += (features.row(r) - centroid).norm();
    spread[cls] = sum / static_cast<double>(rows.size());
  }
  return spread;
}

inline double mean_spread(const std::map<std::uint32_t, double>& spread) {
  if (spread.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [_, v] : spread) s += v;
  return s / static_cast<double>(spread.size());
}

/// Generating identity of each sample (provenance primary).
inline std::vector<std::uint32_t> primary_classes(const Dataset& ds) {
  std::vector<std::uint32_t> c;
  c.reserve(ds.size());
  for (const auto& s : ds.samples) c.push_back(s.provenance.primary);
  return c;
}

}  // namespace synlab

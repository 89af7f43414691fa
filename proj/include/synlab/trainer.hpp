#pragma once

// Embedding network trained with the unified margin-based softmax
//   L = -log( e^{s*delta} / (e^{s*delta} + sum_{j != y} e^{s*cos(theta_j)}) ),
//   delta = cos(m1*theta_y + m2) - m3,
// with hand-derived gradients, SGD with momentum and weight decay, a step
// learning-rate schedule, and optional domain mixup of paired batches.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "synlab/error.hpp"
#include "synlab/factor_space.hpp"
#include "synlab/random.hpp"
#include "synlab/synthesizer.hpp"

namespace synlab {

/// Raised when a gradient or parameter stops being finite.
class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_finite"; }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Weights and biases of every dense layer plus the class-weight matrix.
/// Gradients and momentum buffers share this layout.
struct ParameterSet {
  std::vector<Eigen::MatrixXd> weights;  // layer l maps in -> out, shape (out x in)
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd class_weights;  // (n_classes x embedding_dim)

  ParameterSet zeros_like() const {
    ParameterSet z;
    for (const auto& w : weights) z.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) z.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    z.class_weights = Eigen::MatrixXd::Zero(class_weights.rows(), class_weights.cols());
    return z;
  }

  bool same_shape(const ParameterSet& o) const {
    if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols()) return false;
    for (std::size_t l = 0; l < biases.size(); ++l)
      if (biases[l].size() != o.biases[l].size()) return false;
    return class_weights.rows() == o.class_weights.rows() && class_weights.cols() == o.class_weights.cols();
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return class_weights.allFinite();
  }

  std::size_t parameter_count() const {
    std::size_t n = static_cast<std::size_t>(class_weights.size());
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
  }

  /// Visits every scalar as a mutable reference, in serialization order.
  template <class F>
  void for_each_scalar(F&& f) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) f(weights[l](r, c));
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) f(biases[l](i));
    }
    for (Eigen::Index r = 0; r < class_weights.rows(); ++r)
      for (Eigen::Index c = 0; c < class_weights.cols(); ++c) f(class_weights(r, c));
  }

  bool operator==(const ParameterSet& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    return class_weights == o.class_weights;
  }
};

using Gradients = ParameterSet;
using MomentumState = ParameterSet;

struct NetworkShape {
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden{128, 64};
  std::size_t embedding_dim = 32;
  std::size_t class_count = 2;
};

/// tanh MLP producing L2-normalized embeddings, plus the class-weight matrix W.
struct EmbeddingNetwork {
  ParameterSet params;

  static EmbeddingNetwork initialize(const NetworkShape& shape, std::uint64_t seed) {
    detail::require(shape.input_dim >= 1 && shape.embedding_dim >= 1 && shape.class_count >= 1,
                    "network dimensions must be >= 1");
    EmbeddingNetwork net;
    Rng rng = make_rng(seed, Stream::init);
    std::vector<std::size_t> sizes{shape.input_dim};
    sizes.insert(sizes.end(), shape.hidden.begin(), shape.hidden.end());
    sizes.push_back(shape.embedding_dim);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      detail::require(sizes[l + 1] >= 1, "hidden layer sizes must be >= 1");
      const auto in = static_cast<Eigen::Index>(sizes[l]);
      const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-a, a);
      Eigen::MatrixXd w(out, in);
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) w(r, c) = u(rng);
      net.params.weights.push_back(std::move(w));
      net.params.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    const double w_std = std::sqrt(2.0 / static_cast<double>(shape.embedding_dim + shape.class_count));
    std::normal_distribution<double> normal(0.0, w_std);
    net.params.class_weights.resize(static_cast<Eigen::Index>(shape.class_count),
                                    static_cast<Eigen::Index>(shape.embedding_dim));
    for (Eigen::Index r = 0; r < net.params.class_weights.rows(); ++r)
      for (Eigen::Index c = 0; c < net.params.class_weights.cols(); ++c) net.params.class_weights(r, c) = normal(rng);
    return net;
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(params.weights.front().cols()); }
  std::size_t embedding_dim() const { return static_cast<std::size_t>(params.weights.back().rows()); }
  std::size_t class_count() const { return static_cast<std::size_t>(params.class_weights.rows()); }
  std::size_t layer_count() const { return params.weights.size(); }

  bool operator==(const EmbeddingNetwork&) const = default;
};

namespace detail {
inline constexpr double kNormFloor = 1e-12;

inline Eigen::VectorXd row_norms(const RowMatrix& m) {
  Eigen::VectorXd n = m.rowwise().norm();
  return n.cwiseMax(kNormFloor);
}
inline Eigen::VectorXd row_norms(const Eigen::MatrixXd& m) {
  Eigen::VectorXd n = m.rowwise().norm();
  return n.cwiseMax(kNormFloor);
}
}  // namespace detail

inline Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd n = detail::row_norms(m);
  return n.cwiseInverse().asDiagonal() * m;
}

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  std::vector<RowMatrix> activations;  // [0] = input, then each layer's output
  Eigen::VectorXd norms;               // pre-normalization embedding norms
  RowMatrix embeddings;                // L2-normalized
};

inline ForwardCache forward_cached(const EmbeddingNetwork& net, const RowMatrix& x) {
  detail::require(!net.params.weights.empty(), "network has no layers");
  detail::require(static_cast<std::size_t>(x.cols()) == net.input_dim(), "observation width does not match network input");
  ForwardCache cache;
  cache.activations.reserve(net.layer_count() + 1);
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    RowMatrix z = cache.activations.back() * net.params.weights[l].transpose();
    z.rowwise() += net.params.biases[l].transpose();
    if (l + 1 < net.layer_count()) z = z.array().tanh();
    cache.activations.push_back(std::move(z));
  }
  cache.norms = detail::row_norms(cache.activations.back());
  cache.embeddings = cache.norms.cwiseInverse().asDiagonal() * cache.activations.back();
  return cache;
}

/// (batch x embedding_dim) matrix of unit-norm embeddings.
inline RowMatrix forward_embed(const EmbeddingNetwork& net, const RowMatrix& observations) {
  return forward_cached(net, observations).embeddings;
}

/// cos(theta) matrix: entry (i, j) = <x_i, W_j> for unit rows, clamped to [-1, 1].
inline RowMatrix cosine_logits(const RowMatrix& embeddings, const Eigen::MatrixXd& normalized_w) {
  detail::require(embeddings.cols() == normalized_w.cols(), "embedding and class-weight widths differ");
  RowMatrix c = embeddings * normalized_w.transpose();
  return c.cwiseMax(-1.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------
// Margin loss

struct MarginConfig {
  double m1 = 1.0;
  double m2 = 0.5;
  double m3 = 0.0;
  double s = 30.0;

  static MarginConfig softmax(double s = 30.0) { return {1.0, 0.0, 0.0, s}; }
  static MarginConfig arcface(double m2 = 0.5, double s = 30.0) { return {1.0, m2, 0.0, s}; }
  static MarginConfig cosface(double m3 = 0.35, double s = 30.0) { return {1.0, 0.0, m3, s}; }
  static MarginConfig sphereface(double m1 = 1.35, double s = 30.0) { return {m1, 0.0, 0.0, s}; }

  void validate() const {
    detail::require(std::isfinite(m1) && m1 >= 1.0, "m1 must be >= 1");
    detail::require(m2 >= 0.0 && m2 <= std::numbers::pi / 2, "m2 must lie in [0, pi/2]");
    detail::require(std::isfinite(m3) && m3 >= 0.0, "m3 must be >= 0");
    detail::require(std::isfinite(s) && s > 0.0, "s must be > 0");
  }

  bool operator==(const MarginConfig&) const = default;
};

inline constexpr double kArccosClamp = 1e-7;

struct MarginTerm {
  double delta = 0.0;
  double d_delta_d_cos = 0.0;
};

/// delta = cos(m1*theta + m2) - m3 and its derivative w.r.t. cos(theta).
/// With m1 = 1, m2 = 0 the arccos round trip is skipped so the plain
/// (or CosFace) softmax is reproduced exactly.
///
/// Past theta* = (pi - m2) / m1 the cosine turns back up, so a target pointing
/// away from its class would score better than one at theta*. Training finds
/// that: every class weight anti-aligned with one shared embedding. There delta
/// continues as cos(theta) - cos(theta*) - 1 - m3, which is continuous at
/// theta* and keeps decreasing.
inline MarginTerm margin_term(double c, const MarginConfig& cfg) {
  if (cfg.m1 == 1.0 && cfg.m2 == 0.0) return {c - cfg.m3, 1.0};
  const double lo = -1.0 + kArccosClamp;
  const double hi = 1.0 - kArccosClamp;
  const double cc = std::clamp(c, lo, hi);
  const double theta = std::acos(cc);
  const double arg = cfg.m1 * theta + cfg.m2;
  MarginTerm t;
  if (arg > std::numbers::pi) {
    const double cos_star = std::cos((std::numbers::pi - cfg.m2) / cfg.m1);
    t.delta = (c - cos_star) - 1.0 - cfg.m3;
    t.d_delta_d_cos = 1.0;
    return t;
  }
  t.delta = std::cos(arg) - cfg.m3;
  t.d_delta_d_cos = (c >= lo && c <= hi) ? cfg.m1 * std::sin(arg) / std::sin(theta) : 0.0;
  return t;
}

using Target = std::vector<LabelEntry>;

inline std::vector<Target> to_targets(std::span<const SoftLabel> labels) {
  std::vector<Target> t;
  t.reserve(labels.size());
  for (const auto& l : labels) t.push_back(l.entries());
  return t;
}

namespace detail {

/// Loss of one row against a hard class y; optionally accumulates
/// weight * dL/dcos into grad_row.
template <class Row, class GradRow>
double hard_margin_loss(const Row& cos_row, std::uint32_t y, const MarginConfig& cfg, double weight,
                        GradRow* grad_row, Eigen::ArrayXd& z) {
  const auto yy = static_cast<Eigen::Index>(y);
  const MarginTerm mt = margin_term(cos_row(yy), cfg);
  const double zy = cfg.s * mt.delta;
  z = cfg.s * cos_row.transpose().array();
  z(yy) = zy;
  Eigen::Index imax = 0;
  const double zmax = z.maxCoeff(&imax);
  z = (z - zmax).exp();
  // log1p over the non-max terms keeps tiny losses accurate.
  z(imax) = 0.0;
  const double rest = z.sum();
  z(imax) = 1.0;
  const double sum = 1.0 + rest;
  const double loss = (zmax - zy) + std::log1p(rest);
  if (grad_row != nullptr) {
    const double scale = weight * cfg.s / sum;
    const double p_y = z(yy) / sum;
    (*grad_row) += (scale * z).matrix().transpose();
    // Replace the generic p_y term with the margin-aware target term.
    (*grad_row)(yy) += weight * cfg.s * ((p_y - 1.0) * mt.d_delta_d_cos - p_y);
  }
  return loss;
}

inline void check_targets(std::span<const Target> targets, Eigen::Index rows, Eigen::Index classes) {
  require(static_cast<Eigen::Index>(targets.size()) == rows, "one target per row required");
  for (const auto& t : targets) {
    require(!t.empty(), "empty target");
    for (const auto& e : t)
      require(static_cast<Eigen::Index>(e.class_index) < classes, "label references an out-of-range class");
  }
}

}  // namespace detail

/// Mean over rows of sum_k w_k * L_margin(row, class_k).
inline double margin_loss(const RowMatrix& cos_matrix, std::span<const Target> targets, const MarginConfig& cfg) {
  cfg.validate();
  detail::check_targets(targets, cos_matrix.rows(), cos_matrix.cols());
  Eigen::ArrayXd scratch;
  double total = 0.0;
  for (Eigen::Index i = 0; i < cos_matrix.rows(); ++i) {
    const auto row = cos_matrix.row(i);
    for (const auto& e : targets[static_cast<std::size_t>(i)]) {
      if (e.weight == 0.0) continue;
      total += e.weight * detail::hard_margin_loss(row, e.class_index, cfg, e.weight,
                                                   static_cast<Eigen::RowVectorXd*>(nullptr), scratch);
    }
  }
  return total / static_cast<double>(cos_matrix.rows());
}

inline double margin_loss(const RowMatrix& cos_matrix, std::span<const SoftLabel> labels, const MarginConfig& cfg) {
  const auto t = to_targets(labels);
  return margin_loss(cos_matrix, std::span<const Target>(t), cfg);
}

/// Observation matrix plus per-row soft targets (and per-row psi when domain-mixed).
struct Batch {
  RowMatrix observations;
  std::vector<Target> targets;
  std::vector<double> psi;

  std::size_t size() const noexcept { return targets.size(); }
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

inline LossAndGradients margin_loss_grad(const Batch& batch, const EmbeddingNetwork& net, const MarginConfig& cfg) {
  cfg.validate();
  const auto B = static_cast<Eigen::Index>(batch.size());
  detail::require(B > 0, "empty batch");
  detail::require(batch.observations.rows() == B, "batch observation rows and targets differ");
  detail::check_targets(batch.targets, B, static_cast<Eigen::Index>(net.class_count()));

  const ForwardCache fc = forward_cached(net, batch.observations);
  const Eigen::VectorXd w_norms = detail::row_norms(net.params.class_weights);
  const Eigen::MatrixXd wn = w_norms.cwiseInverse().asDiagonal() * net.params.class_weights;
  const RowMatrix cosm = cosine_logits(fc.embeddings, wn);

  // dL/dcos, already divided by the batch size.
  RowMatrix g = RowMatrix::Zero(B, cosm.cols());
  Eigen::ArrayXd scratch;
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto row = cosm.row(i);
    auto grow = g.row(i);
    for (const auto& e : batch.targets[static_cast<std::size_t>(i)]) {
      if (e.weight == 0.0) continue;
      total += e.weight * detail::hard_margin_loss(row, e.class_index, cfg, e.weight * inv_b, &grow, scratch);
    }
  }

  LossAndGradients out;
  out.loss = total * inv_b;
  out.grads = net.params.zeros_like();

  // Through cos = e_i . w_j, then both row normalizations.
  const RowMatrix d_emb = g * wn;
  const Eigen::MatrixXd d_wn = g.transpose() * fc.embeddings;
  {
    const Eigen::VectorXd proj = (wn.array() * d_wn.array()).rowwise().sum();
    out.grads.class_weights = w_norms.cwiseInverse().asDiagonal() * (d_wn - proj.asDiagonal() * wn);
  }
  const Eigen::VectorXd eproj = (fc.embeddings.array() * d_emb.array()).rowwise().sum();
  RowMatrix delta = fc.norms.cwiseInverse().asDiagonal() * (d_emb - eproj.asDiagonal() * fc.embeddings);

  for (std::size_t l = net.layer_count(); l-- > 0;) {
    const RowMatrix& a_in = fc.activations[l];
    out.grads.weights[l] = delta.transpose() * a_in;
    out.grads.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    RowMatrix d_in = delta * net.params.weights[l];
    // a_in is a tanh output: d tanh = 1 - a^2
    delta = d_in.array() * (1.0 - a_in.array().square());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Domain mixup

/// X = psi * X_S + (1 - psi) * X_R per row, with targets mixed the same way.
inline Batch domain_mixup_batch(const Batch& syn, const Batch& real, std::span<const MixupRatio> psi) {
  detail::require(syn.size() == real.size(), "domain mixup needs equal batch sizes");
  detail::require(syn.observations.rows() == real.observations.rows() &&
                      syn.observations.cols() == real.observations.cols(),
                  "domain mixup needs matching observation shapes");
  detail::require(psi.size() == syn.size(), "one psi per pair required");
  Batch out;
  out.observations.resize(syn.observations.rows(), syn.observations.cols());
  out.targets.resize(syn.size());
  out.psi.resize(syn.size());
  for (std::size_t i = 0; i < syn.size(); ++i) {
    const double ws = psi[i].value();
    const double wr = psi[i].complement();
    const auto r = static_cast<Eigen::Index>(i);
    out.observations.row(r) = ws * syn.observations.row(r) + wr * real.observations.row(r);
    out.psi[i] = ws;
    Target t;
    auto add = [&t](const LabelEntry& e, double w) {
      if (w == 0.0 || e.weight == 0.0) return;
      for (auto& existing : t)
        if (existing.class_index == e.class_index) {
          existing.weight += w * e.weight;
          return;
        }
      t.push_back({e.class_index, w * e.weight});
    };
    for (const auto& e : syn.targets[i]) add(e, ws);
    for (const auto& e : real.targets[i]) add(e, wr);
    out.targets[i] = std::move(t);
  }
  return out;
}

inline Batch domain_mixup_batch(const Batch& syn, const Batch& real, Rng& rng) {
  std::vector<MixupRatio> psi(syn.size());
  for (auto& p : psi) p = sample_mixup_ratio(MixupMode::soft_label_full_grid, rng);
  return domain_mixup_batch(syn, real, std::span<const MixupRatio>(psi));
}

// ---------------------------------------------------------------------------
// Optimization

struct TrainConfig {
  std::size_t epochs = 40;
  double base_lr = 0.1;
  std::vector<std::size_t> decay_epochs{24, 30, 36};
  double decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 128;
  bool domain_mixup = false;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{128, 64};
  std::size_t embedding_dim = 32;

  void validate() const {
    detail::require(epochs >= 1, "epochs must be >= 1");
    detail::require(batch_size >= 1, "batch size must be >= 1");
    detail::require(base_lr >= 0.0 && std::isfinite(base_lr), "learning rate must be finite and >= 0");
    for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
      detail::require(decay_epochs[i] < epochs, "decay epochs must be < epochs");
      if (i > 0) detail::require(decay_epochs[i] > decay_epochs[i - 1], "decay epochs must be strictly increasing");
    }
  }

  bool operator==(const TrainConfig&) const = default;
};

inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  detail::require(epoch < cfg.epochs, "epoch outside the schedule");
  double lr = cfg.base_lr;
  for (std::size_t d : cfg.decay_epochs)
    if (epoch >= d) lr *= cfg.decay_factor;
  return lr;
}

/// v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
inline void sgd_step(EmbeddingNetwork& net, const Gradients& grads, MomentumState& velocity, double lr, double momentum,
                     double weight_decay) {
  detail::require(net.params.same_shape(grads) && net.params.same_shape(velocity),
                  "parameter, gradient and momentum shapes differ");
  if (!grads.all_finite()) throw NumericalError("non-finite gradient");
  auto update = [&](auto& p, const auto& g, auto& v) {
    v = momentum * v + (g + weight_decay * p);
    p -= lr * v;
  };
  for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
    update(net.params.weights[l], grads.weights[l], velocity.weights[l]);
    update(net.params.biases[l], grads.biases[l], velocity.biases[l]);
  }
  update(net.params.class_weights, grads.class_weights, velocity.class_weights);
}

// ---------------------------------------------------------------------------
// Training loop

/// Training inputs. With domain mixup on, `primary` is the synthetic set and
/// `real` the real-proxy set; without it, `real` (if given) is appended to the
/// label space and trained on alongside `primary`.
struct TrainingData {
  const Dataset* primary = nullptr;
  const Dataset* real = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainState {
  EmbeddingNetwork net;
  MomentumState momentum;
  std::size_t next_epoch = 0;
};

struct TrainResult {
  EmbeddingNetwork net;
  MomentumState momentum;
  std::vector<EpochRecord> history;
};

inline RowMatrix observation_matrix(const Dataset& ds, std::span<const std::size_t> rows) {
  RowMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.observation_dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Observation& o = ds.samples[rows[i]].observation;
    for (std::size_t d = 0; d < o.size(); ++d) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = o[d];
  }
  return x;
}

inline RowMatrix observation_matrix(const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return observation_matrix(ds, all);
}

inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows, std::uint32_t class_offset = 0) {
  Batch b;
  b.observations = observation_matrix(ds, rows);
  b.targets.reserve(rows.size());
  for (std::size_t r : rows) {
    Target t = ds.samples[r].label.entries();
    for (auto& e : t) e.class_index += class_offset;
    b.targets.push_back(std::move(t));
  }
  return b;
}

inline std::size_t union_class_count(const TrainingData& data) {
  return data.primary->class_count + (data.real != nullptr ? data.real->class_count : 0);
}

inline EmbeddingNetwork initial_network(const TrainConfig& cfg, const TrainingData& data) {
  detail::require(data.primary != nullptr && data.primary->size() > 0, "training needs a nonempty dataset");
  NetworkShape shape;
  shape.input_dim = data.primary->observation_dim;
  shape.hidden = cfg.hidden;
  shape.embedding_dim = cfg.embedding_dim;
  shape.class_count = union_class_count(data);
  return EmbeddingNetwork::initialize(shape, cfg.seed);
}

/// Runs epochs [start, stop). Batch order and mixup ratios derive from
/// (seed, epoch) only, so a run resumed from a checkpoint follows the same
/// trajectory as an uninterrupted one.
inline TrainResult train(const TrainConfig& cfg, const MarginConfig& margin, const TrainingData& data,
                         std::optional<TrainState> resume = std::nullopt,
                         std::optional<std::size_t> stop_epoch = std::nullopt,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  margin.validate();
  detail::require(data.primary != nullptr && data.primary->size() > 0, "training needs a nonempty dataset");
  if (cfg.domain_mixup)
    detail::require(data.real != nullptr && data.real->size() > 0,
                    "domain mixup needs both a synthetic and a real-proxy dataset");
  if (data.real != nullptr)
    detail::require(data.real->observation_dim == data.primary->observation_dim, "datasets differ in observation width");

  TrainResult result;
  std::size_t start = 0;
  if (resume) {
    result.net = std::move(resume->net);
    result.momentum = std::move(resume->momentum);
    start = resume->next_epoch;
    detail::require(result.net.class_count() == union_class_count(data), "resumed network has the wrong class count");
    detail::require(result.net.params.same_shape(result.momentum), "resumed momentum does not match the network");
  } else {
    result.net = initial_network(cfg, data);
    result.momentum = result.net.params.zeros_like();
  }
  const std::size_t stop = stop_epoch.value_or(cfg.epochs);
  detail::require(stop <= cfg.epochs && start <= stop, "invalid epoch range");

  const Dataset& primary = *data.primary;
  const auto offset = static_cast<std::uint32_t>(primary.class_count);

  // Without domain mixup, both datasets are walked as one index space.
  const std::size_t n_primary = primary.size();
  const std::size_t n_joint = cfg.domain_mixup || data.real == nullptr ? n_primary : n_primary + data.real->size();

  for (std::size_t epoch = start; epoch < stop; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<std::size_t> order(n_joint);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(cfg.seed, Stream::shuffle, {epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::vector<std::size_t> real_order;
    if (cfg.domain_mixup) {
      real_order.resize(data.real->size());
      std::iota(real_order.begin(), real_order.end(), std::size_t{0});
      Rng real_rng = make_rng(cfg.seed, Stream::shuffle, {epoch, 1});
      std::shuffle(real_order.begin(), real_order.end(), real_rng);
    }
    Rng mix_rng = make_rng(cfg.seed, Stream::domain_mix, {epoch});

    double loss_sum = 0.0;
    std::size_t real_cursor = 0;
    for (std::size_t begin = 0; begin < n_joint; begin += cfg.batch_size) {
      const std::size_t end = std::min(n_joint, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      Batch batch;
      if (cfg.domain_mixup) {
        std::vector<std::size_t> real_rows(rows.size());
        for (auto& r : real_rows) {
          r = real_order[real_cursor];
          real_cursor = (real_cursor + 1) % real_order.size();
        }
        batch = domain_mixup_batch(make_batch(primary, rows), make_batch(*data.real, real_rows, offset), mix_rng);
      } else if (data.real == nullptr) {
        batch = make_batch(primary, rows);
      } else {
        std::vector<std::size_t> p_rows, r_rows;
        for (std::size_t r : rows) (r < n_primary ? p_rows : r_rows).push_back(r < n_primary ? r : r - n_primary);
        Batch a = make_batch(primary, p_rows);
        Batch b = make_batch(*data.real, r_rows, offset);
        batch.observations.resize(a.observations.rows() + b.observations.rows(), a.observations.cols());
        batch.observations << a.observations, b.observations;
        batch.targets = std::move(a.targets);
        batch.targets.insert(batch.targets.end(), b.targets.begin(), b.targets.end());
      }

      LossAndGradients lg = margin_loss_grad(batch, result.net, margin);
      if (!std::isfinite(lg.loss)) throw TrainingError(epoch, "non-finite training loss");
      try {
        sgd_step(result.net, lg.grads, result.momentum, lr, cfg.momentum, cfg.weight_decay);
      } catch (const NumericalError& e) {
        throw TrainingError(epoch, e.what());
      }
      loss_sum += lg.loss * static_cast<double>(batch.size());
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n_joint), lr};
    if (!std::isfinite(rec.mean_loss)) throw TrainingError(epoch, "non-finite training loss");
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

inline RowMatrix embed_dataset(const EmbeddingNetwork& net, const Dataset& ds) {
  return forward_embed(net, observation_matrix(ds));
}

}  // namespace synlab

#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls into the library's loss code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "synlab/trainer.hpp"

namespace synlab::oracle {

/// Plain softmax cross-entropy on s * cos, long double, written as
/// -log p_y with p_y = 1 / sum_j exp(s (c_j - c_y)).
inline double softmax_ce(const std::vector<double>& cos_row, std::size_t y, double s) {
  long double denom = 0.0L;
  for (double c : cos_row) denom += std::exp(static_cast<long double>(s) * (static_cast<long double>(c) - cos_row[y]));
  return static_cast<double>(std::log(denom));
}

/// Margin loss of one row by direct evaluation in long double.
/// The clamp only applies to the arccos argument.
inline long double margin_ce(const std::vector<double>& cos_row, std::size_t y, const MarginConfig& cfg) {
  const long double lo = -1.0L + 1e-7L, hi = 1.0L - 1e-7L;
  const long double c = std::clamp(static_cast<long double>(cos_row[y]), lo, hi);
  const long double pi = std::acos(-1.0L);
  const long double arg = cfg.m1 * std::acos(c) + cfg.m2;
  // Beyond m1 * theta + m2 = pi the target term continues linearly in cos,
  // anchored so it is continuous where the cosine bottoms out.
  const long double delta = arg <= pi ? std::cos(arg) - cfg.m3
                                      : cos_row[y] - std::cos((pi - cfg.m2) / cfg.m1) - 1.0L - cfg.m3;
  // log(1 + sum_{j != y} e^{s (c_j - delta)}); avoids cancelling s * delta.
  long double rest = 0.0L;
  for (std::size_t j = 0; j < cos_row.size(); ++j)
    if (j != y) rest += std::exp(static_cast<long double>(cfg.s) * (cos_row[j] - delta));
  return std::log1p(rest);
}

struct GradCase {
  EmbeddingNetwork net;
  Batch batch;
  MarginConfig margin;
  bool soft = false;
};

/// Small random network and batch. Presets cycle through ArcFace, CosFace and
/// SphereFace; odd cases carry two-entry soft labels.
inline GradCase make_grad_case(std::size_t index, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + index);
  std::uniform_int_distribution<std::size_t> pick(0, 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0), scale_u(8.0, 40.0);
  GradCase gc;
  const double s = scale_u(rng);
  switch (index % 3) {
    case 0: gc.margin = MarginConfig::arcface(0.2 + 0.4 * (u(rng) + 1.0) / 2.0, s); break;
    case 1: gc.margin = MarginConfig::cosface(0.1 + 0.3 * (u(rng) + 1.0) / 2.0, s); break;
    default: gc.margin = MarginConfig::sphereface(1.0 + 0.5 * (u(rng) + 1.0) / 2.0, s); break;
  }
  gc.soft = index % 2 == 1;

  NetworkShape shape;
  shape.input_dim = 6;
  shape.hidden = {5 + pick(rng), 4};
  shape.embedding_dim = 3 + pick(rng);
  shape.class_count = 4 + pick(rng);
  gc.net = EmbeddingNetwork::initialize(shape, seed + index);
  // Nonzero biases so their gradients are exercised too.
  for (auto& b : gc.net.params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.3 * u(rng);

  const Eigen::Index rows = 3 + static_cast<Eigen::Index>(pick(rng));
  gc.batch.observations.resize(rows, 6);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < 6; ++c) gc.batch.observations(r, c) = u(rng);
  std::uniform_int_distribution<std::uint32_t> cls(0, static_cast<std::uint32_t>(shape.class_count - 1));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::uint32_t a = cls(rng);
    if (!gc.soft) {
      gc.batch.targets.push_back({{a, 1.0}});
      continue;
    }
    std::uint32_t b = cls(rng);
    while (b == a) b = cls(rng);
    const double w = 0.05 * static_cast<double>(1 + rng() % 19);
    gc.batch.targets.push_back({{a, w}, {b, 1.0 - w}});
  }
  return gc;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences over every scalar parameter. The relative error divides
/// by max(|analytic|, |numeric|, floor); the floor keeps components that are
/// themselves at the difference quotient's roundoff level (~eps * L / h, with
/// L up to ~40 here) from dominating.
inline GradCheck check_gradients(const GradCase& gc, double h = 1e-5, double floor = 1e-5) {
  const LossAndGradients lg = margin_loss_grad(gc.batch, gc.net, gc.margin);
  std::vector<double> analytic;
  Gradients g = lg.grads;
  g.for_each_scalar([&](double& v) { analytic.push_back(v); });

  EmbeddingNetwork probe = gc.net;
  std::vector<double*> slots;
  probe.params.for_each_scalar([&](double& v) { slots.push_back(&v); });

  GradCheck out;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double orig = *slots[k];
    *slots[k] = orig + h;
    const double up = margin_loss_grad(gc.batch, probe, gc.margin).loss;
    *slots[k] = orig - h;
    const double down = margin_loss_grad(gc.batch, probe, gc.margin).loss;
    *slots[k] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[k] - numeric) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace synlab::oracle

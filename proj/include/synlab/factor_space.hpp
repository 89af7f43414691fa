#pragma once

// Disentangled latent factors: z-space sampling, the seeded z -> lambda map,
// and identity mixup on lambda-space identity coefficients.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "synlab/error.hpp"
#include "synlab/random.hpp"

namespace synlab {

enum class FactorRole : std::uint8_t { identity = 0, expression = 1, illumination = 2, pose = 3, noise = 4 };

inline constexpr std::array<FactorRole, 5> kAllRoles = {FactorRole::identity, FactorRole::expression,
                                                        FactorRole::illumination, FactorRole::pose,
                                                        FactorRole::noise};

constexpr std::size_t role_index(FactorRole r) noexcept { return static_cast<std::size_t>(r); }

constexpr std::string_view to_string(FactorRole r) noexcept {
  switch (r) {
    case FactorRole::identity: return "identity";
    case FactorRole::expression: return "expression";
    case FactorRole::illumination: return "illumination";
    case FactorRole::pose: return "pose";
    case FactorRole::noise: return "noise";
  }
  return "?";
}

enum class FactorSpace : std::uint8_t { z, lambda };

struct FactorVector {
  FactorRole role = FactorRole::identity;
  FactorSpace space = FactorSpace::z;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const FactorVector&) const = default;
};

/// Per-role latent dimensions plus the seed of the z -> lambda map.
///
/// The noise channel may be given dimension 0 (no background variation); every
/// other role needs at least one component.
struct LatentConfig {
  std::array<std::size_t, 5> dims = {16, 4, 4, 3, 8};
  std::uint64_t mapper_seed = 0x5eed'0001ULL;

  std::size_t dim(FactorRole r) const noexcept { return dims[role_index(r)]; }

  void validate() const {
    for (FactorRole r : kAllRoles) {
      if (r == FactorRole::noise) continue;
      detail::require(dim(r) >= 1, "latent dimension for " + std::string(to_string(r)) + " must be >= 1");
    }
  }

  bool operator==(const LatentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Labels and mixup ratios

struct LabelEntry {
  std::uint32_t class_index = 0;
  double weight = 1.0;
  bool operator==(const LabelEntry&) const = default;
};

/// One or two (class, weight) entries with weights summing to one.
class SoftLabel {
 public:
  SoftLabel() = default;

  static SoftLabel hard(std::uint32_t cls) { return SoftLabel({LabelEntry{cls, 1.0}}); }

  /// Two-class label; a zero-weight side is dropped so endpoints collapse to a hard label.
  static SoftLabel mixed(std::uint32_t c1, double w1, std::uint32_t c2, double w2) {
    if (w2 == 0.0) return hard(c1);
    if (w1 == 0.0) return hard(c2);
    return SoftLabel({LabelEntry{c1, w1}, LabelEntry{c2, w2}});
  }

  explicit SoftLabel(std::vector<LabelEntry> entries) : entries_(std::move(entries)) { validate(); }

  const std::vector<LabelEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool is_hard() const noexcept { return entries_.size() == 1; }

  /// Class with the largest weight; the first entry wins ties.
  std::uint32_t primary() const noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (entries_[i].weight > entries_[best].weight) best = i;
    return entries_[best].class_index;
  }

  double weight_of(std::uint32_t cls) const noexcept {
    for (const auto& e : entries_)
      if (e.class_index == cls) return e.weight;
    return 0.0;
  }

  /// Order-insensitive equality.
  friend bool operator==(const SoftLabel& a, const SoftLabel& b) {
    if (a.size() != b.size()) return false;
    for (const auto& e : a.entries_)
      if (b.weight_of(e.class_index) != e.weight) return false;
    return true;
  }

 private:
  void validate() const {
    detail::require(!entries_.empty() && entries_.size() <= 2, "soft label needs 1 or 2 entries");
    double sum = 0.0;
    for (const auto& e : entries_) {
      detail::require(e.weight >= 0.0 && e.weight <= 1.0, "soft label weight outside [0, 1]");
      sum += e.weight;
    }
    detail::require(std::abs(sum - 1.0) <= 1e-12, "soft label weights must sum to 1");
    if (entries_.size() == 2)
      detail::require(entries_[0].class_index != entries_[1].class_index, "soft label classes must be distinct");
  }

  std::vector<LabelEntry> entries_{LabelEntry{}};
};

enum class MixupMode : std::uint8_t { soft_label_full_grid, primary_label_narrow_grid };

/// A ratio on the 0.05-spaced grid, stored as its integer step (value = step / 20)
/// so complements are exact.
class MixupRatio {
 public:
  static constexpr int kSteps = 20;

  MixupRatio() = default;

  static MixupRatio at_step(int step, MixupMode mode) {
    detail::require(step >= min_step(mode) && step <= kSteps, "mixup ratio outside its mode's grid");
    MixupRatio r;
    r.step_ = step;
    r.mode_ = mode;
    return r;
  }

  static MixupRatio from_value(double v, MixupMode mode) {
    detail::require(std::isfinite(v), "mixup ratio must be finite");
    const double scaled = v * kSteps;
    const double rounded = std::round(scaled);
    detail::require(std::abs(scaled - rounded) <= 1e-9, "mixup ratio not on the 0.05 grid");
    return at_step(static_cast<int>(rounded), mode);
  }

  static constexpr int min_step(MixupMode mode) noexcept {
    return mode == MixupMode::soft_label_full_grid ? 0 : 12;
  }
  static constexpr int grid_size(MixupMode mode) noexcept { return kSteps - min_step(mode) + 1; }

  int step() const noexcept { return step_; }
  MixupMode mode() const noexcept { return mode_; }
  double value() const noexcept { return static_cast<double>(step_) / kSteps; }
  /// 1 - value, computed from the integer step.
  double complement() const noexcept { return static_cast<double>(kSteps - step_) / kSteps; }

  bool operator==(const MixupRatio&) const = default;

 private:
  int step_ = kSteps;
  MixupMode mode_ = MixupMode::soft_label_full_grid;
};

// ---------------------------------------------------------------------------
// Operations

/// Independent N(0, scale^2) draws for every component of the role.
inline FactorVector sample_z(const LatentConfig& cfg, FactorRole role, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FactorVector z{role, FactorSpace::z, std::vector<double>(cfg.dim(role))};
  for (double& v : z.values) v = scale * normal(rng);
  return z;
}

/// Fixed seeded surrogate for the learned z -> lambda maps: per role,
/// lambda = tanh(A2 * tanh(A1 * z + c1) + c2).
class LatentMapper {
 public:
  explicit LatentMapper(const LatentConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (FactorRole r : kAllRoles) {
      const std::size_t n = cfg_.dim(r);
      if (n == 0) continue;
      RoleMap& m = maps_[role_index(r)];
      m.hidden = std::max<std::size_t>(8, 2 * n);
      Rng rng = make_rng(cfg_.mapper_seed, Stream::mapper, {role_index(r)});
      std::normal_distribution<double> normal(0.0, 1.0);
      const double s1 = 1.0 / std::sqrt(static_cast<double>(n));
      const double s2 = 1.5 / std::sqrt(static_cast<double>(m.hidden));
      m.a1.resize(m.hidden * n);
      m.c1.resize(m.hidden);
      m.a2.resize(n * m.hidden);
      m.c2.resize(n);
      for (double& v : m.a1) v = s1 * normal(rng);
      for (double& v : m.c1) v = 0.2 * normal(rng);
      for (double& v : m.a2) v = s2 * normal(rng);
      for (double& v : m.c2) v = 0.2 * normal(rng);
    }
  }

  const LatentConfig& config() const noexcept { return cfg_; }

  FactorVector to_lambda(const FactorVector& z) const {
    detail::require(z.space == FactorSpace::z, "map_to_lambda expects a z-space vector");
    const std::size_t n = cfg_.dim(z.role);
    detail::require(z.size() == n, "z length does not match the configured dimension for " +
                                       std::string(to_string(z.role)));
    FactorVector out{z.role, FactorSpace::lambda, std::vector<double>(n)};
    if (n == 0) return out;
    const RoleMap& m = maps_[role_index(z.role)];
    std::vector<double> h(m.hidden);
    for (std::size_t i = 0; i < m.hidden; ++i) {
      double acc = m.c1[i];
      for (std::size_t j = 0; j < n; ++j) acc += m.a1[i * n + j] * z.values[j];
      h[i] = std::tanh(acc);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = m.c2[i];
      for (std::size_t j = 0; j < m.hidden; ++j) acc += m.a2[i * m.hidden + j] * h[j];
      out.values[i] = std::tanh(acc);
    }
    return out;
  }

  /// Lambda image of the zero z-vector: the canonical "neutral" attribute value.
  FactorVector canonical(FactorRole role) const {
    return to_lambda(FactorVector{role, FactorSpace::z, std::vector<double>(cfg_.dim(role), 0.0)});
  }

 private:
  struct RoleMap {
    std::size_t hidden = 0;
    std::vector<double> a1, c1, a2, c2;  // row-major
  };

  LatentConfig cfg_;
  std::array<RoleMap, 5> maps_{};
};

inline FactorVector map_to_lambda(const FactorVector& z, const LatentMapper& mapper) { return mapper.to_lambda(z); }

struct IdentityMixup {
  FactorVector alpha;
  SoftLabel label;
};

/// alpha = phi * alpha1 + (1 - phi) * alpha2, with the label mixed the same way
/// (soft mode) or kept as eta1 (primary-label mode).
inline IdentityMixup identity_mixup(const FactorVector& alpha1, const FactorVector& alpha2, std::uint32_t eta1,
                                    std::uint32_t eta2, MixupRatio phi) {
  detail::require(alpha1.role == FactorRole::identity && alpha2.role == FactorRole::identity,
                  "identity mixup expects identity coefficients");
  detail::require(alpha1.space == FactorSpace::lambda && alpha2.space == FactorSpace::lambda,
                  "identity mixup operates in lambda-space");
  detail::require(alpha1.size() == alpha2.size(), "identity coefficient lengths differ");
  const bool endpoint = phi.step() == 0 || phi.step() == MixupRatio::kSteps;
  detail::require(eta1 != eta2 || endpoint, "identity mixup needs two distinct classes");

  const double w1 = phi.value();
  const double w2 = phi.complement();
  IdentityMixup out{FactorVector{FactorRole::identity, FactorSpace::lambda, std::vector<double>(alpha1.size())},
                    SoftLabel::hard(eta1)};
  for (std::size_t k = 0; k < alpha1.size(); ++k) out.alpha.values[k] = w1 * alpha1.values[k] + w2 * alpha2.values[k];
  if (phi.mode() == MixupMode::soft_label_full_grid) out.label = SoftLabel::mixed(eta1, w1, eta2, w2);
  return out;
}

/// Uniform draw over the mode's grid (21 points full, 9 points narrow).
inline MixupRatio sample_mixup_ratio(MixupMode mode, Rng& rng) {
  std::uniform_int_distribution<int> pick(MixupRatio::min_step(mode), MixupRatio::kSteps);
  return MixupRatio::at_step(pick(rng), mode);
}

}  // namespace synlab

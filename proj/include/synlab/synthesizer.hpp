#pragma once

// Surrogate face generator: renders lambda-space factor bundles into bounded
// observation vectors for a synthetic and a real-proxy domain, and builds
// width/depth, long-tailed and attribute-controlled datasets plus the 10-fold
// verification pair protocol.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "synlab/error.hpp"
#include "synlab/factor_space.hpp"
#include "synlab/random.hpp"

namespace synlab {

enum class Domain : std::uint8_t { synthetic = 0, real_proxy = 1 };

constexpr const char* to_string(Domain d) noexcept { return d == Domain::synthetic ? "synthetic" : "real_proxy"; }

/// Blur analogue plus global gain/bias jitter applied to real-proxy renders.
struct AppearanceJitter {
  double gain = 1.0;
  double bias = 0.0;
};

struct AppearanceConfig {
  bool smooth = true;
  double gain_low = 0.7, gain_high = 1.3;
  double bias_low = -0.1, bias_high = 0.1;
  bool operator==(const AppearanceConfig&) const = default;
};

struct RenderParams {
  std::size_t observation_dim = 64;
  std::size_t hidden_dim = 64;
  std::uint64_t render_seed = 0x7e4d'0001ULL;
  /// Relative strength of each factor channel in the first mixing layer.
  double identity_gain = 1.0;
  double nuisance_gain = 1.0;
  double noise_gain = 0.35;
  double output_gain = 1.5;
  /// Correlation between the two domains' nuisance weights: 0 draws them
  /// independently, 1 shares them (the gap is then appearance alone).
  double nuisance_correlation = 0.0;
  AppearanceConfig appearance{};
  bool operator==(const RenderParams&) const = default;
};

using Observation = std::vector<float>;

/// The five lambda-space channels consumed by the renderer.
struct LambdaBundle {
  FactorVector identity, expression, illumination, pose, noise;

  const FactorVector& operator[](FactorRole r) const {
    switch (r) {
      case FactorRole::identity: return identity;
      case FactorRole::expression: return expression;
      case FactorRole::illumination: return illumination;
      case FactorRole::pose: return pose;
      case FactorRole::noise: return noise;
    }
    return noise;
  }
};

inline AppearanceJitter draw_appearance(const AppearanceConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> g(cfg.gain_low, cfg.gain_high);
  std::uniform_real_distribution<double> b(cfg.bias_low, cfg.bias_high);
  AppearanceJitter j;
  j.gain = g(rng);
  j.bias = b(rng);
  return j;
}

/// Length-3 moving average (edges average the neighbours that exist), then
/// gain/bias, then clamp to [-1, 1].
inline Observation apply_appearance(const Observation& obs, const AppearanceJitter& j, bool smooth) {
  const std::size_t n = obs.size();
  Observation out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = obs[i];
    if (smooth) {
      double acc = obs[i];
      int count = 1;
      if (i > 0) acc += obs[i - 1], ++count;
      if (i + 1 < n) acc += obs[i + 1], ++count;
      v = acc / count;
    }
    out[i] = static_cast<float>(std::clamp(j.gain * v + j.bias, -1.0, 1.0));
  }
  return out;
}

inline Observation appearance_perturb(const Observation& obs, Rng& rng, const AppearanceConfig& cfg = {}) {
  return apply_appearance(obs, draw_appearance(cfg, rng), cfg.smooth);
}

/// Two-layer tanh mixing network for one domain. The identity block of the
/// first layer and the whole second layer depend only on render_seed; the
/// nuisance blocks are drawn per domain.
class Renderer {
 public:
  Renderer(const LatentConfig& latent, const RenderParams& params, Domain domain)
      : latent_(latent), params_(params), domain_(domain) {
    latent_.validate();
    detail::require(params.observation_dim >= 1 && params.hidden_dim >= 1, "render dimensions must be >= 1");
    detail::require(params.nuisance_correlation >= 0.0 && params.nuisance_correlation <= 1.0,
                    "nuisance correlation must lie in [0, 1]");
    std::size_t total = 0;
    for (FactorRole r : kAllRoles) {
      offsets_[role_index(r)] = total;
      total += latent_.dim(r);
    }
    const auto H = static_cast<Eigen::Index>(params.hidden_dim);
    const auto D = static_cast<Eigen::Index>(params.observation_dim);
    w1_.resize(H, static_cast<Eigen::Index>(total));
    const double rho = params.nuisance_correlation;
    for (FactorRole r : kAllRoles) {
      const std::size_t n = latent_.dim(r);
      if (n == 0) continue;
      const bool shared = r == FactorRole::identity;
      const double gain = r == FactorRole::identity ? params.identity_gain
                          : r == FactorRole::noise  ? params.noise_gain
                                                    : params.nuisance_gain;
      const double scale = gain * 2.0 / std::sqrt(static_cast<double>(n));
      // The synthetic draw is always made; the real-proxy domain blends it
      // with its own independent draw.
      Rng base = shared ? make_rng(params.render_seed, Stream::render, {role_index(r)})
                        : make_rng(params.render_seed, Stream::render, {role_index(r), 1});
      Rng own = make_rng(params.render_seed, Stream::render, {role_index(r), 2});
      const bool blend = !shared && domain == Domain::real_proxy;
      std::normal_distribution<double> normal(0.0, 1.0), normal_own(0.0, 1.0);
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(n); ++c)
        for (Eigen::Index h = 0; h < H; ++h) {
          double w = normal(base);
          if (blend) w = rho * w + std::sqrt(1.0 - rho * rho) * normal_own(own);
          w1_(h, static_cast<Eigen::Index>(offsets_[role_index(r)]) + c) = scale * w;
        }
    }
    Rng rng = make_rng(params.render_seed, Stream::render, {100});
    std::normal_distribution<double> normal(0.0, 1.0);
    b1_.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) b1_(h) = 0.1 * normal(rng);
    w2_.resize(D, H);
    const double s2 = params.output_gain / std::sqrt(static_cast<double>(H));
    for (Eigen::Index h = 0; h < H; ++h)
      for (Eigen::Index d = 0; d < D; ++d) w2_(d, h) = s2 * normal(rng);
    b2_.resize(D);
    for (Eigen::Index d = 0; d < D; ++d) b2_(d) = 0.1 * normal(rng);
  }

  Domain domain() const noexcept { return domain_; }
  const RenderParams& params() const noexcept { return params_; }
  const LatentConfig& latent() const noexcept { return latent_; }

  /// Noise-free mixing network output, before any appearance perturbation.
  Observation render_clean(const LambdaBundle& bundle) const {
    Eigen::VectorXd in(w1_.cols());
    for (FactorRole r : kAllRoles) {
      const FactorVector& v = bundle[r];
      detail::require(v.role == r, "bundle slot holds the wrong role");
      detail::require(v.space == FactorSpace::lambda, "render expects lambda-space factors");
      detail::require(v.size() == latent_.dim(r),
                      "dimension mismatch for " + std::string(to_string(r)) + " in render");
      for (std::size_t k = 0; k < v.size(); ++k)
        in(static_cast<Eigen::Index>(offsets_[role_index(r)] + k)) = v.values[k];
    }
    const Eigen::VectorXd h = (w1_ * in + b1_).array().tanh();
    const Eigen::VectorXd x = (w2_ * h + b2_).array().tanh();
    // Rounding to float must not land on the open interval's endpoints.
    constexpr float kEdge = 0.99999994f;
    Observation out(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i)
      out[static_cast<std::size_t>(i)] = std::clamp(static_cast<float>(x(i)), -kEdge, kEdge);
    return out;
  }

  /// Synthetic renders ignore `rng`; real-proxy renders draw their appearance jitter from it.
  Observation render(const LambdaBundle& bundle, Rng& rng) const {
    Observation clean = render_clean(bundle);
    if (domain_ == Domain::synthetic) return clean;
    return appearance_perturb(clean, rng, params_.appearance);
  }

 private:
  LatentConfig latent_;
  RenderParams params_;
  Domain domain_;
  std::array<std::size_t, 5> offsets_{};
  Eigen::MatrixXd w1_, w2_;
  Eigen::VectorXd b1_, b2_;
};

inline Observation render(const LambdaBundle& bundle, const Renderer& renderer, Rng& rng) {
  return renderer.render(bundle, rng);
}

/// Latent mapper plus one renderer per domain: everything fixed for an experiment.
class Generator {
 public:
  explicit Generator(const LatentConfig& latent = {}, const RenderParams& render = {})
      : mapper_(latent),
        synthetic_(latent, render, Domain::synthetic),
        real_proxy_(latent, render, Domain::real_proxy) {}

  const LatentConfig& latent() const noexcept { return mapper_.config(); }
  const LatentMapper& mapper() const noexcept { return mapper_; }
  const RenderParams& render_params() const noexcept { return synthetic_.params(); }
  const Renderer& renderer(Domain d) const noexcept { return d == Domain::synthetic ? synthetic_ : real_proxy_; }

 private:
  LatentMapper mapper_;
  Renderer synthetic_, real_proxy_;
};

// ---------------------------------------------------------------------------
// Datasets

struct Provenance {
  double phi = 1.0;
  std::uint32_t primary = 0;
  std::optional<std::uint32_t> secondary;
  bool operator==(const Provenance&) const = default;
};

struct Sample {
  Observation observation;
  SoftLabel label;
  Domain domain = Domain::synthetic;
  Provenance provenance;
};

/// Nuisance attributes that may vary per sample.
struct AttributeSet {
  bool expression = false;
  bool pose = false;
  bool illumination = false;

  static AttributeSet none() { return {}; }
  static AttributeSet all() { return {true, true, true}; }
  bool varies(FactorRole r) const noexcept {
    return (r == FactorRole::expression && expression) || (r == FactorRole::pose && pose) ||
           (r == FactorRole::illumination && illumination);
  }
  bool operator==(const AttributeSet&) const = default;
};

enum class IdentityMixupMode : std::uint8_t { off, soft_label_full_grid, primary_label_narrow_grid };

struct DatasetSpec {
  std::vector<std::size_t> group_identities{1};
  std::vector<std::size_t> group_depths{1};
  AttributeSet attribute_variation = AttributeSet::all();
  IdentityMixupMode im_mode = IdentityMixupMode::off;
  Domain domain = Domain::synthetic;
  std::uint64_t seed = 0;
  bool held_out = false;
  /// Variance multiplier on expression z draws (limited expression diversity).
  double expression_variance = 0.3;

  /// The "N_S" special case: N identities with S samples each.
  static DatasetSpec balanced(std::size_t identities, std::size_t depth) {
    DatasetSpec s;
    s.group_identities = {identities};
    s.group_depths = {depth};
    return s;
  }

  /// Five equal groups of `per_group` identities with the given depths.
  static DatasetSpec grouped(std::size_t per_group, std::vector<std::size_t> depths) {
    DatasetSpec s;
    s.group_identities.assign(depths.size(), per_group);
    s.group_depths = std::move(depths);
    return s;
  }

  std::size_t identity_count() const noexcept {
    return std::accumulate(group_identities.begin(), group_identities.end(), std::size_t{0});
  }

  std::size_t sample_count() const noexcept {
    std::size_t total = 0;
    for (std::size_t g = 0; g < group_identities.size() && g < group_depths.size(); ++g)
      total += group_identities[g] * group_depths[g];
    return total;
  }

  /// Depth of every identity, in label order.
  std::vector<std::size_t> per_identity_counts() const {
    std::vector<std::size_t> counts;
    counts.reserve(identity_count());
    for (std::size_t g = 0; g < group_identities.size(); ++g) counts.insert(counts.end(), group_identities[g], group_depths[g]);
    return counts;
  }

  void validate() const {
    detail::require(!group_identities.empty(), "dataset spec has no identity groups");
    detail::require(group_identities.size() == group_depths.size(), "group identities and depths differ in length");
    for (std::size_t g = 0; g < group_identities.size(); ++g) {
      detail::require(group_identities[g] > 0, "dataset spec has a group with zero identities");
      detail::require(group_depths[g] > 0, "dataset spec has a group with zero depth");
    }
    detail::require(expression_variance >= 0.0, "expression variance must be non-negative");
    if (im_mode != IdentityMixupMode::off)
      detail::require(identity_count() >= 2, "identity mixup needs at least two identities");
  }

  bool operator==(const DatasetSpec&) const = default;
};

/// Population standard deviation of a list of counts.
inline double count_stddev(const std::vector<std::size_t>& counts) {
  if (counts.empty()) return 0.0;
  const double n = static_cast<double>(counts.size());
  double mean = 0.0;
  for (std::size_t c : counts) mean += static_cast<double>(c);
  mean /= n;
  double ss = 0.0;
  for (std::size_t c : counts) ss += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  return std::sqrt(ss / n);
}

struct Dataset {
  std::size_t observation_dim = 0;
  std::size_t class_count = 0;
  std::vector<Sample> samples;
  /// Lambda-space identity coefficient of each class (not serialized).
  std::vector<std::vector<double>> identity_coefficients;

  std::size_t size() const noexcept { return samples.size(); }

  /// Samples generated per identity, from provenance.
  std::vector<std::size_t> identity_sample_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (const auto& s : samples) ++counts.at(s.provenance.primary);
    return counts;
  }
};

inline Dataset build_dataset(const DatasetSpec& spec, const Generator& gen) {
  spec.validate();
  const LatentConfig& latent = gen.latent();
  const LatentMapper& mapper = gen.mapper();
  const Renderer& renderer = gen.renderer(spec.domain);
  const std::uint64_t split = spec.held_out ? 1 : 0;
  const auto n_ids = static_cast<std::uint32_t>(spec.identity_count());

  Dataset ds;
  ds.observation_dim = renderer.params().observation_dim;
  ds.class_count = n_ids;
  ds.identity_coefficients.resize(n_ids);

  std::vector<FactorVector> alphas(n_ids);
  for (std::uint32_t k = 0; k < n_ids; ++k) {
    Rng rng = make_rng(spec.seed, Stream::identity, {split, k});
    alphas[k] = mapper.to_lambda(sample_z(latent, FactorRole::identity, rng));
    ds.identity_coefficients[k] = alphas[k].values;
  }

  std::array<FactorVector, 5> canonical;
  for (FactorRole r : kAllRoles) canonical[role_index(r)] = mapper.canonical(r);

  const MixupMode mix_mode = spec.im_mode == IdentityMixupMode::primary_label_narrow_grid
                                 ? MixupMode::primary_label_narrow_grid
                                 : MixupMode::soft_label_full_grid;

  ds.samples.reserve(spec.sample_count());
  std::uint32_t k = 0;
  for (std::size_t g = 0; g < spec.group_identities.size(); ++g) {
    for (std::size_t i = 0; i < spec.group_identities[g]; ++i, ++k) {
      for (std::uint64_t s = 0; s < spec.group_depths[g]; ++s) {
        LambdaBundle bundle;
        auto nuisance = [&](FactorRole r) {
          const bool redraw = r == FactorRole::noise || spec.attribute_variation.varies(r);
          if (!redraw) return canonical[role_index(r)];
          Rng rng = make_rng(spec.seed, Stream::nuisance, {split, k, s, role_index(r)});
          const double scale = r == FactorRole::expression ? std::sqrt(spec.expression_variance) : 1.0;
          return mapper.to_lambda(sample_z(latent, r, rng, scale));
        };
        bundle.expression = nuisance(FactorRole::expression);
        bundle.illumination = nuisance(FactorRole::illumination);
        bundle.pose = nuisance(FactorRole::pose);
        bundle.noise = nuisance(FactorRole::noise);

        Sample sample;
        sample.domain = spec.domain;
        sample.provenance.primary = k;
        if (spec.im_mode == IdentityMixupMode::off) {
          bundle.identity = alphas[k];
          sample.label = SoftLabel::hard(k);
        } else {
          Rng rng = make_rng(spec.seed, Stream::mixup, {split, k, s});
          const MixupRatio phi = sample_mixup_ratio(mix_mode, rng);
          std::uniform_int_distribution<std::uint32_t> other(0, n_ids - 2);
          std::uint32_t partner = other(rng);
          if (partner >= k) ++partner;
          IdentityMixup mixed = identity_mixup(alphas[k], alphas[partner], k, partner, phi);
          bundle.identity = std::move(mixed.alpha);
          sample.label = std::move(mixed.label);
          sample.provenance.phi = phi.value();
          sample.provenance.secondary = partner;
        }
        Rng perturb = make_rng(spec.seed, Stream::perturb, {split, k, s});
        sample.observation = renderer.render(bundle, perturb);
        ds.samples.push_back(std::move(sample));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Verification pairs

struct Pair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool is_same = false;
  bool operator==(const Pair&) const = default;
};

struct PairSet {
  std::vector<Pair> pairs;
  /// Indices into `pairs`, one list per fold.
  std::vector<std::vector<std::size_t>> folds;

  bool operator==(const PairSet&) const = default;
};

inline constexpr std::size_t kFolds = 10;

/// n_pairs / 2 positive and n_pairs / 2 negative distinct pairs, balanced inside
/// each of the 10 folds.
inline PairSet build_pair_protocol(const Dataset& test, std::size_t n_pairs, Rng& rng) {
  detail::require(n_pairs > 0 && n_pairs % (2 * kFolds) == 0, "pair count must be a positive multiple of 20");
  std::vector<std::vector<std::size_t>> by_class(test.class_count);
  for (std::size_t i = 0; i < test.samples.size(); ++i) by_class.at(test.samples[i].label.primary()).push_back(i);

  std::vector<std::uint32_t> usable;
  for (std::uint32_t c = 0; c < by_class.size(); ++c)
    if (by_class[c].size() >= 2) usable.push_back(c);
  std::vector<std::uint32_t> populated;
  for (std::uint32_t c = 0; c < by_class.size(); ++c)
    if (!by_class[c].empty()) populated.push_back(c);

  const std::size_t half = n_pairs / 2;
  double max_pos = 0.0;
  for (std::uint32_t c : usable) max_pos += 0.5 * static_cast<double>(by_class[c].size() * (by_class[c].size() - 1));
  double max_neg = 0.0;
  {
    double total = static_cast<double>(test.samples.size());
    double same = 0.0;
    for (const auto& v : by_class) same += static_cast<double>(v.size()) * static_cast<double>(v.size());
    max_neg = 0.5 * (total * total - same);
  }
  detail::require(usable.size() >= 2 && populated.size() >= 2,
                  "pair protocol needs at least two identities with two samples each");
  detail::require(max_pos >= static_cast<double>(half) && max_neg >= static_cast<double>(half),
                  "test dataset too small to supply the requested distinct pairs");

  auto key = [](std::size_t a, std::size_t b) { return a < b ? std::pair{a, b} : std::pair{b, a}; };
  std::set<std::pair<std::size_t, std::size_t>> seen;

  std::vector<Pair> positives, negatives;
  auto enumerate_if_small = [&](bool positive, std::vector<Pair>& out) {
    // Rejection sampling stalls when the request is close to the number of
    // distinct pairs available; enumerate and sample without replacement instead.
    const double avail = positive ? max_pos : max_neg;
    if (avail > 4.0 * static_cast<double>(half)) return false;
    std::vector<Pair> all;
    for (std::size_t i = 0; i < test.samples.size(); ++i)
      for (std::size_t j = i + 1; j < test.samples.size(); ++j) {
        const bool same = test.samples[i].label.primary() == test.samples[j].label.primary();
        if (same == positive) all.push_back({i, j, positive});
      }
    std::shuffle(all.begin(), all.end(), rng);
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
    return true;
  };

  if (!enumerate_if_small(true, positives)) {
    std::uniform_int_distribution<std::size_t> pick_class(0, usable.size() - 1);
    while (positives.size() < half) {
      const auto& members = by_class[usable[pick_class(rng)]];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      const std::size_t a = members[pick(rng)];
      const std::size_t b = members[pick(rng)];
      if (a == b || !seen.insert(key(a, b)).second) continue;
      positives.push_back({a, b, true});
    }
  }
  if (!enumerate_if_small(false, negatives)) {
    std::uniform_int_distribution<std::size_t> pick_class(0, populated.size() - 1);
    while (negatives.size() < half) {
      const std::uint32_t ca = populated[pick_class(rng)];
      const std::uint32_t cb = populated[pick_class(rng)];
      if (ca == cb) continue;
      std::uniform_int_distribution<std::size_t> pa(0, by_class[ca].size() - 1);
      std::uniform_int_distribution<std::size_t> pb(0, by_class[cb].size() - 1);
      const std::size_t a = by_class[ca][pa(rng)];
      const std::size_t b = by_class[cb][pb(rng)];
      if (!seen.insert(key(a, b)).second) continue;
      negatives.push_back({a, b, false});
    }
  }

  std::shuffle(positives.begin(), positives.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);
  const std::size_t per_fold = half / kFolds;
  PairSet set;
  set.folds.resize(kFolds);
  for (std::size_t f = 0; f < kFolds; ++f) {
    std::vector<Pair> fold;
    fold.insert(fold.end(), positives.begin() + static_cast<std::ptrdiff_t>(f * per_fold),
                positives.begin() + static_cast<std::ptrdiff_t>((f + 1) * per_fold));
    fold.insert(fold.end(), negatives.begin() + static_cast<std::ptrdiff_t>(f * per_fold),
                negatives.begin() + static_cast<std::ptrdiff_t>((f + 1) * per_fold));
    std::shuffle(fold.begin(), fold.end(), rng);
    for (const Pair& p : fold) {
      set.folds[f].push_back(set.pairs.size());
      set.pairs.push_back(p);
    }
  }
  return set;
}

}  // namespace synlab

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "synlab/factor_space.hpp"

using namespace synlab;

TEST(SampleZ, SameStateGivesIdenticalVectors) {
  LatentConfig cfg;
  Rng a(42);
  Rng b = a;
  EXPECT_EQ(sample_z(cfg, FactorRole::pose, a), sample_z(cfg, FactorRole::pose, b));
}

TEST(SampleZ, LengthFollowsRoleDimension) {
  LatentConfig cfg;
  Rng rng(1);
  EXPECT_EQ(sample_z(cfg, FactorRole::identity, rng).size(), 16u);
  EXPECT_EQ(sample_z(cfg, FactorRole::pose, rng).size(), 3u);
  EXPECT_EQ(sample_z(cfg, FactorRole::noise, rng).size(), 8u);
}

TEST(SampleZ, MonteCarloMomentsMatchStandardNormal) {
  LatentConfig cfg;
  Rng rng(2024);
  constexpr int kDraws = 100000;
  std::vector<double> sum(16, 0.0), sq(16, 0.0);
  for (int i = 0; i < kDraws; ++i) {
    const FactorVector z = sample_z(cfg, FactorRole::identity, rng);
    for (std::size_t k = 0; k < z.size(); ++k) {
      sum[k] += z.values[k];
      sq[k] += z.values[k] * z.values[k];
    }
  }
  for (std::size_t k = 0; k < 16; ++k) {
    const double mean = sum[k] / kDraws;
    const double var = sq[k] / kDraws - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02) << "component " << k;
    EXPECT_NEAR(var, 1.0, 0.05) << "component " << k;
  }
}

TEST(LatentConfig, RejectsZeroDimensionExceptNoise) {
  LatentConfig cfg;
  cfg.dims[role_index(FactorRole::expression)] = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  LatentConfig no_noise;
  no_noise.dims[role_index(FactorRole::noise)] = 0;
  EXPECT_NO_THROW(no_noise.validate());
}

TEST(MapToLambda, ZeroVectorIsDeterministic) {
  LatentConfig cfg;
  LatentMapper m1(cfg), m2(cfg);
  FactorVector z{FactorRole::identity, FactorSpace::z, std::vector<double>(16, 0.0)};
  const FactorVector a = map_to_lambda(z, m1);
  const FactorVector b = map_to_lambda(z, m2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.space, FactorSpace::lambda);
  EXPECT_EQ(a.role, FactorRole::identity);
  double norm = 0.0;
  for (double v : a.values) norm += v * v;
  EXPECT_GT(norm, 0.0);  // bias path is nonzero
}

TEST(MapToLambda, OutputsStrictlyInsideOpenInterval) {
  LatentConfig cfg;
  LatentMapper mapper(cfg);
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    for (FactorRole r : kAllRoles) {
      const double scale = trial % 10 == 0 ? 50.0 : 1.0;
      const FactorVector lam = map_to_lambda(sample_z(cfg, r, rng, scale), mapper);
      for (double v : lam.values) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
        EXPECT_TRUE(std::isfinite(v));
      }
    }
  }
}

TEST(MapToLambda, DifferentSeedsGiveDifferentMaps) {
  LatentConfig a, b;
  b.mapper_seed = a.mapper_seed + 1;
  LatentMapper ma(a), mb(b);
  Rng rng(3);
  const FactorVector z = sample_z(a, FactorRole::identity, rng);
  const FactorVector la = map_to_lambda(z, ma);
  const FactorVector lb = map_to_lambda(z, mb);
  double d2 = 0.0;
  for (std::size_t k = 0; k < la.size(); ++k) d2 += (la.values[k] - lb.values[k]) * (la.values[k] - lb.values[k]);
  EXPECT_GT(std::sqrt(d2), 1e-6);
}

TEST(MapToLambda, RejectsLengthMismatchAndWrongSpace) {
  LatentMapper mapper(LatentConfig{});
  EXPECT_THROW(map_to_lambda(FactorVector{FactorRole::pose, FactorSpace::z, {0.0, 1.0}}, mapper), InvalidArgument);
  EXPECT_THROW(map_to_lambda(FactorVector{FactorRole::pose, FactorSpace::lambda, {0.0, 0.0, 0.0}}, mapper),
               InvalidArgument);
}

namespace {
FactorVector lam(std::vector<double> v) { return {FactorRole::identity, FactorSpace::lambda, std::move(v)}; }
}  // namespace

TEST(IdentityMixup, EndpointsReturnTheInputs) {
  const auto a1 = lam({0.3, -0.2, 0.9});
  const auto a2 = lam({-0.5, 0.1, 0.0});
  const auto one = identity_mixup(a1, a2, 4, 9, MixupRatio::from_value(1.0, MixupMode::soft_label_full_grid));
  EXPECT_EQ(one.alpha.values, a1.values);
  EXPECT_EQ(one.label, SoftLabel::hard(4));
  EXPECT_EQ(one.label.size(), 1u);
  const auto zero = identity_mixup(a1, a2, 4, 9, MixupRatio::from_value(0.0, MixupMode::soft_label_full_grid));
  EXPECT_EQ(zero.alpha.values, a2.values);
  EXPECT_EQ(zero.label, SoftLabel::hard(9));
}

TEST(IdentityMixup, MidpointArithmetic) {
  const auto r = identity_mixup(lam({1.0, 0.0}), lam({0.0, 1.0}), 0, 1,
                                MixupRatio::from_value(0.5, MixupMode::soft_label_full_grid));
  EXPECT_EQ(r.alpha.values, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(r.label.weight_of(0), 0.5);
  EXPECT_EQ(r.label.weight_of(1), 0.5);
}

TEST(IdentityMixup, PrimaryLabelModeKeepsFirstLabel) {
  const auto r = identity_mixup(lam({1.0, 0.0}), lam({0.0, 1.0}), 3, 8,
                                MixupRatio::from_value(0.6, MixupMode::primary_label_narrow_grid));
  EXPECT_NEAR(r.alpha.values[0], 0.6, 1e-15);
  EXPECT_EQ(r.label, SoftLabel::hard(3));
}

TEST(IdentityMixup, RejectsBadInputs) {
  const auto half = MixupRatio::from_value(0.5, MixupMode::soft_label_full_grid);
  EXPECT_THROW(identity_mixup(lam({1.0}), lam({1.0, 2.0}), 0, 1, half), InvalidArgument);
  EXPECT_THROW(identity_mixup(lam({1.0}), lam({0.0}), 2, 2, half), InvalidArgument);
  EXPECT_THROW(MixupRatio::from_value(0.5, MixupMode::primary_label_narrow_grid), InvalidArgument);
  EXPECT_THROW(MixupRatio::from_value(0.33, MixupMode::soft_label_full_grid), InvalidArgument);
  EXPECT_THROW(MixupRatio::from_value(1.05, MixupMode::soft_label_full_grid), InvalidArgument);
}

TEST(IdentityMixupProperty, ConvexityAndSymmetry) {
  LatentConfig cfg;
  LatentMapper mapper(cfg);
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a1 = map_to_lambda(sample_z(cfg, FactorRole::identity, rng), mapper);
    const auto a2 = map_to_lambda(sample_z(cfg, FactorRole::identity, rng), mapper);
    const MixupRatio phi = sample_mixup_ratio(MixupMode::soft_label_full_grid, rng);
    const auto fwd = identity_mixup(a1, a2, 11, 22, phi);
    for (std::size_t k = 0; k < a1.size(); ++k) {
      EXPECT_LE(std::min(a1.values[k], a2.values[k]), fwd.alpha.values[k]);
      EXPECT_GE(std::max(a1.values[k], a2.values[k]), fwd.alpha.values[k]);
    }
    const auto rev = identity_mixup(a2, a1, 22, 11, MixupRatio::at_step(MixupRatio::kSteps - phi.step(), phi.mode()));
    EXPECT_EQ(fwd.alpha.values, rev.alpha.values);
    EXPECT_EQ(fwd.label, rev.label);
  }
}

TEST(SampleMixupRatio, ValuesStayOnTheirGrids) {
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const MixupRatio full = sample_mixup_ratio(MixupMode::soft_label_full_grid, rng);
    EXPECT_GE(full.value(), 0.0);
    EXPECT_LE(full.value(), 1.0);
    EXPECT_NEAR(full.value() * 20.0, std::round(full.value() * 20.0), 1e-12);
    const MixupRatio narrow = sample_mixup_ratio(MixupMode::primary_label_narrow_grid, rng);
    EXPECT_GE(narrow.value(), 0.6);
    EXPECT_LE(narrow.value(), 1.0);
    EXPECT_NEAR(narrow.value() * 20.0, std::round(narrow.value() * 20.0), 1e-12);
  }
  EXPECT_EQ(MixupRatio::grid_size(MixupMode::soft_label_full_grid), 21);
  // 0.60, 0.65, ..., 1.00
  EXPECT_EQ(MixupRatio::grid_size(MixupMode::primary_label_narrow_grid), 9);
}

TEST(SampleMixupRatio, FullGridIsUniform) {
  Rng rng(11);
  constexpr int kDraws = 100000;
  std::map<int, int> hist;
  for (int i = 0; i < kDraws; ++i) ++hist[sample_mixup_ratio(MixupMode::soft_label_full_grid, rng).step()];
  ASSERT_EQ(hist.size(), 21u);
  for (const auto& [step, count] : hist) EXPECT_NEAR(static_cast<double>(count) / kDraws, 1.0 / 21.0, 0.01) << step;
}

TEST(SoftLabel, Validation) {
  EXPECT_THROW(SoftLabel(std::vector<LabelEntry>{}), InvalidArgument);
  EXPECT_THROW(SoftLabel({{1, 0.5}, {1, 0.5}}), InvalidArgument);
  EXPECT_THROW(SoftLabel({{1, 0.7}, {2, 0.7}}), InvalidArgument);
  EXPECT_THROW(SoftLabel({{1, 0.2}, {2, 0.3}, {3, 0.5}}), InvalidArgument);
  EXPECT_NO_THROW(SoftLabel({{1, 0.25}, {2, 0.75}}));
  EXPECT_EQ(SoftLabel::mixed(1, 0.25, 2, 0.75).primary(), 2u);
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "support/oracles.hpp"
#include "synlab/trainer.hpp"

using namespace synlab;

namespace {

RowMatrix random_rows(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

RowMatrix cos_row(std::initializer_list<double> v) {
  RowMatrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

std::vector<Target> hard(std::uint32_t c) { return {{{c, 1.0}}}; }

/// Two linearly separable classes of 20 samples each in 8 dimensions.
Dataset separable_dataset() {
  Dataset ds;
  ds.observation_dim = 8;
  ds.class_count = 2;
  Rng rng(21);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (std::uint32_t c = 0; c < 2; ++c)
    for (int i = 0; i < 20; ++i) {
      Sample s;
      s.observation.resize(8);
      for (auto& v : s.observation) v = static_cast<float>(u(rng));
      s.observation[0] = c == 0 ? 0.8f : -0.8f;
      s.label = SoftLabel::hard(c);
      s.provenance.primary = c;
      ds.samples.push_back(std::move(s));
    }
  return ds;
}

TrainConfig small_config(std::size_t epochs = 10) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.decay_epochs = {epochs / 2, epochs * 3 / 4};
  cfg.batch_size = 8;
  cfg.hidden = {16};
  cfg.embedding_dim = 4;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

// --- forward_embed / cosine_logits -----------------------------------------

TEST(ForwardEmbed, RowsHaveUnitNorm) {
  NetworkShape shape;
  shape.input_dim = 64;
  const auto net = EmbeddingNetwork::initialize(shape, 1);
  const RowMatrix e = forward_embed(net, random_rows(50, 64, 2));
  ASSERT_EQ(e.cols(), 32);
  for (Eigen::Index r = 0; r < e.rows(); ++r) EXPECT_NEAR(e.row(r).norm(), 1.0, 1e-12);
}

TEST(ForwardEmbed, ZeroWeightsGiveConstantEmbedding) {
  NetworkShape shape;
  shape.input_dim = 10;
  auto net = EmbeddingNetwork::initialize(shape, 1);
  for (auto& w : net.params.weights) w.setZero();
  for (auto& b : net.params.biases) b.setConstant(0.25);
  const RowMatrix e = forward_embed(net, random_rows(5, 10, 3));
  for (Eigen::Index r = 1; r < e.rows(); ++r) EXPECT_EQ(e.row(r), e.row(0));
}

TEST(ForwardEmbed, DeterministicForFixedSeed) {
  NetworkShape shape;
  shape.input_dim = 12;
  const RowMatrix x = random_rows(7, 12, 4);
  EXPECT_EQ(forward_embed(EmbeddingNetwork::initialize(shape, 9), x),
            forward_embed(EmbeddingNetwork::initialize(shape, 9), x));
  EXPECT_NE(forward_embed(EmbeddingNetwork::initialize(shape, 9), x),
            forward_embed(EmbeddingNetwork::initialize(shape, 10), x));
}

TEST(ForwardEmbed, RejectsWidthMismatch) {
  NetworkShape shape;
  shape.input_dim = 12;
  EXPECT_THROW(forward_embed(EmbeddingNetwork::initialize(shape, 1), random_rows(2, 11, 1)), InvalidArgument);
}

TEST(CosineLogits, ParallelAndOrthogonal) {
  Eigen::MatrixXd w(2, 3);
  w << 1, 0, 0, 0, 1, 0;
  RowMatrix x(1, 3);
  x << 1, 0, 0;
  const RowMatrix c = cosine_logits(x, w);
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_EQ(c(0, 1), 0.0);
}

TEST(CosineLogits, MatchesDirectDotProducts) {
  const RowMatrix e = forward_embed(EmbeddingNetwork::initialize(NetworkShape{8, {6}, 5, 2}, 1), random_rows(9, 8, 5));
  const Eigen::MatrixXd w = normalize_rows(random_rows(7, 5, 6));
  const RowMatrix c = cosine_logits(e, w);
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < 5; ++k) dot += e(i, k) * w(j, k);
      EXPECT_NEAR(c(i, j), dot, 1e-12);
      EXPECT_LE(std::abs(c(i, j)), 1.0);
    }
}

// --- margin_loss -------------------------------------------------------------

TEST(MarginLoss, PlainSoftmaxTwoClasses) {
  const double loss = margin_loss(cos_row({1.0, 0.0}), hard(0), MarginConfig::softmax(1.0));
  EXPECT_NEAR(loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-15);
  EXPECT_NEAR(loss, 0.313262, 5e-7);
}

TEST(MarginLoss, ArcFaceRecipeValue) {
  const MarginConfig cfg = MarginConfig::arcface(0.5, 30.0);
  const double loss = margin_loss(cos_row({1.0, 0.0}), hard(0), cfg);
  // Library against direct long-double evaluation, clamp included.
  const long double ref = oracle::margin_ce({1.0, 0.0}, 0, cfg);
  EXPECT_NEAR(loss / static_cast<double>(ref), 1.0, 1e-9);
  // The unclamped closed form log(1 + e^{-30 cos 0.5}) is the published figure;
  // clamping theta at acos(1 - 1e-7) shifts it by under 1%.
  const double closed = std::log1p(std::exp(-30.0 * std::cos(0.5)));
  EXPECT_NEAR(closed, 3.67e-12, 0.02e-12);
  EXPECT_NEAR(loss / closed, 1.0, 0.01);
}

TEST(MarginLoss, SoftLabelIsMeanOfHardLosses) {
  const RowMatrix c = cos_row({0.3, -0.2, 0.7, 0.1});
  const MarginConfig cfg = MarginConfig::arcface();
  const double a = margin_loss(c, hard(0), cfg);
  const double b = margin_loss(c, hard(2), cfg);
  const std::vector<Target> soft{{{0, 0.5}, {2, 0.5}}};
  EXPECT_EQ(margin_loss(c, soft, cfg), (a + b) / 2.0);
}

TEST(MarginLoss, SoftLabelLinearity) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const RowMatrix c = random_rows(1, 5, static_cast<std::uint64_t>(t));
    const MarginConfig cfg = t % 3 == 0 ? MarginConfig::arcface() : t % 3 == 1 ? MarginConfig::cosface()
                                                                                 : MarginConfig::sphereface();
    const double w = 0.05 * static_cast<double>(1 + rng() % 19);
    const std::vector<Target> soft{{{1, w}, {3, 1.0 - w}}};
    EXPECT_NEAR(margin_loss(c, soft, cfg), w * margin_loss(c, hard(1), cfg) + (1.0 - w) * margin_loss(c, hard(3), cfg),
                1e-12);
  }
}

TEST(MarginLoss, RejectsOutOfRangeClass) {
  EXPECT_THROW(margin_loss(cos_row({0.1, 0.2}), hard(2), MarginConfig::arcface()), InvalidArgument);
  EXPECT_THROW(margin_loss(cos_row({0.1, 0.2}), hard(0), MarginConfig{0.5, 0.0, 0.0, 30.0}), InvalidArgument);
}

TEST(MarginLoss, ZeroMarginMatchesIndependentSoftmax) {
  for (int t = 0; t < 500; ++t) {
    const RowMatrix c = random_rows(1, 2 + t % 9, static_cast<std::uint64_t>(1000 + t));
    const double s = 1.0 + static_cast<double>(t % 64);
    const auto y = static_cast<std::uint32_t>(t % c.cols());
    const std::vector<double> row(c.data(), c.data() + c.cols());
    EXPECT_NEAR(margin_loss(c, hard(y), MarginConfig::softmax(s)), oracle::softmax_ce(row, y, s), 1e-12);
  }
}

TEST(MarginLoss, AgreesWithLongDoubleOracleAcrossPresets) {
  for (int t = 0; t < 300; ++t) {
    const RowMatrix c = random_rows(1, 6, static_cast<std::uint64_t>(2000 + t));
    const MarginConfig cfg = t % 3 == 0 ? MarginConfig::arcface(0.5, 30) : t % 3 == 1 ? MarginConfig::cosface(0.35, 30)
                                                                                       : MarginConfig::sphereface(1.35, 30);
    const std::vector<double> row(c.data(), c.data() + c.cols());
    const double ref = static_cast<double>(oracle::margin_ce(row, 2, cfg));
    EXPECT_NEAR(margin_loss(c, hard(2), cfg), ref, 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(MarginLossProperty, LargerMarginNeverLowersTargetLoss) {
  for (int t = 0; t < 300; ++t) {
    RowMatrix c = random_rows(1, 5, static_cast<std::uint64_t>(3000 + t));
    c(0, 0) = std::abs(c(0, 0));  // theta_y in [0, pi/2]
    double prev_arc = -1.0, prev_cos = -1.0;
    for (double m = 0.0; m <= 0.8; m += 0.1) {
      const double arc = margin_loss(c, hard(0), MarginConfig::arcface(m));
      const double cos = margin_loss(c, hard(0), MarginConfig::cosface(m));
      EXPECT_GE(arc, prev_arc);
      EXPECT_GE(cos, prev_cos);
      prev_arc = arc;
      prev_cos = cos;
    }
  }
}

TEST(MarginLossProperty, FiniteAtExtremes) {
  for (double s : {1.0, 30.0, 64.0})
    for (const MarginConfig& base : {MarginConfig::arcface(), MarginConfig::cosface(), MarginConfig::sphereface(),
                                     MarginConfig::softmax()}) {
      MarginConfig cfg = base;
      cfg.s = s;
      for (const RowMatrix& c : {cos_row({1.0, -1.0, 1.0}), cos_row({-1.0, 1.0, 1.0}), cos_row({-1.0, -1.0, -1.0})}) {
        EXPECT_TRUE(std::isfinite(margin_loss(c, hard(0), cfg)));
        EXPECT_TRUE(std::isfinite(margin_loss(c, hard(1), cfg)));
      }
    }
}

TEST(MarginTermProperty, DecreasingAndContinuousOverFullAngle) {
  for (const MarginConfig& cfg : {MarginConfig::arcface(), MarginConfig::arcface(1.2), MarginConfig::sphereface(),
                                  MarginConfig::sphereface(2.0), MarginConfig{1.5, 0.3, 0.1, 30.0}}) {
    double prev = margin_term(1.0, cfg).delta;
    for (int k = 1; k <= 20000; ++k) {
      const double theta = std::numbers::pi * k / 20000.0;
      const double d = margin_term(std::cos(theta), cfg).delta;
      EXPECT_LE(d, prev + 1e-12) << "theta " << theta;
      EXPECT_LT(prev - d, 2e-3) << "jump at theta " << theta;
      prev = d;
    }
  }
}

TEST(MarginLossProperty, AntiAlignedTargetNeverBeatsAligned) {
  // All classes anti-aligned: the target must not look better than at cos = 1.
  const MarginConfig cfg = MarginConfig::arcface();
  const double anti = margin_loss(cos_row({-1.0, -1.0, -1.0, -1.0}), hard(0), cfg);
  EXPECT_GE(anti, std::log(4.0));
}

TEST(MarginConfig, PresetsAndValidation) {
  EXPECT_EQ(MarginConfig::arcface(), (MarginConfig{1.0, 0.5, 0.0, 30.0}));
  EXPECT_EQ(MarginConfig::cosface(0.35), (MarginConfig{1.0, 0.0, 0.35, 30.0}));
  EXPECT_EQ(MarginConfig::sphereface(1.35), (MarginConfig{1.35, 0.0, 0.0, 30.0}));
  EXPECT_THROW((MarginConfig{1.0, 2.0, 0.0, 30.0}).validate(), InvalidArgument);
  EXPECT_THROW((MarginConfig{1.0, 0.0, -0.1, 30.0}).validate(), InvalidArgument);
  EXPECT_THROW((MarginConfig{1.0, 0.0, 0.0, 0.0}).validate(), InvalidArgument);
}

// --- margin_loss_grad ---------------------------------------------------------

TEST(MarginLossGrad, MatchesFiniteDifferences) {
  std::size_t presets[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 24; ++i) {
    const auto gc = oracle::make_grad_case(i, 77);
    ++presets[i % 3];
    const auto r = oracle::check_gradients(gc);
    EXPECT_GT(r.checked, 50u);
    EXPECT_LT(r.max_rel_error, 1e-4) << "case " << i;
  }
  for (std::size_t n : presets) EXPECT_GE(n, 8u);
}

TEST(MarginLossGrad, LossAgreesWithMarginLoss) {
  const auto gc = oracle::make_grad_case(4, 5);
  const auto lg = margin_loss_grad(gc.batch, gc.net, gc.margin);
  const Eigen::MatrixXd wn = normalize_rows(gc.net.params.class_weights);
  const RowMatrix c = cosine_logits(forward_embed(gc.net, gc.batch.observations), wn);
  EXPECT_NEAR(lg.loss, margin_loss(c, gc.batch.targets, gc.margin), 1e-12);
  EXPECT_TRUE(lg.grads.same_shape(gc.net.params));
}

TEST(MarginLossGrad, SymmetricTwoClassSoftmax) {
  NetworkShape shape{6, {5}, 3, 2};
  auto net = EmbeddingNetwork::initialize(shape, 4);
  Batch b;
  b.observations = random_rows(1, 6, 8);
  b.targets = hard(0);
  const Eigen::RowVectorXd e = forward_embed(net, b.observations).row(0);
  Eigen::RowVectorXd u(3);
  u << 0.3, -0.7, 0.2;
  u -= u.dot(e) * e;  // orthogonal to the embedding
  net.params.class_weights.row(0) = e + u;
  net.params.class_weights.row(1) = e - u;
  const auto lg = margin_loss_grad(b, net, MarginConfig::softmax(10.0));
  const double g0 = lg.grads.class_weights.row(0).dot(e);
  const double g1 = lg.grads.class_weights.row(1).dot(e);
  EXPECT_NEAR(g0, -g1, 1e-12);
  EXPECT_LT(g0, 0.0);
}

TEST(MarginLossGrad, InvariantToEmbeddingScale) {
  const auto gc = oracle::make_grad_case(0, 11);
  const auto base = margin_loss_grad(gc.batch, gc.net, gc.margin);
  for (double c : {0.01, 0.5, 3.0, 250.0}) {
    EmbeddingNetwork scaled = gc.net;
    scaled.params.weights.back() *= c;
    scaled.params.biases.back() *= c;
    const auto lg = margin_loss_grad(gc.batch, scaled, gc.margin);
    EXPECT_NEAR(lg.loss, base.loss, 1e-12 * std::max(1.0, base.loss));
    EXPECT_LT((lg.grads.class_weights - base.grads.class_weights).cwiseAbs().maxCoeff(),
              1e-12 * std::max(1.0, base.grads.class_weights.cwiseAbs().maxCoeff()));
  }
}

// --- domain mixup -------------------------------------------------------------

namespace {
Batch constant_batch(double value, std::uint32_t cls, std::size_t rows = 3, Eigen::Index cols = 4) {
  Batch b;
  b.observations = RowMatrix::Constant(static_cast<Eigen::Index>(rows), cols, value);
  b.targets.assign(rows, Target{{cls, 1.0}});
  return b;
}
std::vector<MixupRatio> all_psi(double v, std::size_t n) {
  return std::vector<MixupRatio>(n, MixupRatio::from_value(v, MixupMode::soft_label_full_grid));
}
}  // namespace

TEST(DomainMixup, EndpointsAndMidpoint) {
  const Batch syn = constant_batch(0.2, 1);
  const Batch real = constant_batch(-0.2, 7);
  const Batch one = domain_mixup_batch(syn, real, all_psi(1.0, 3));
  EXPECT_EQ(one.observations, syn.observations);
  for (const auto& t : one.targets) EXPECT_EQ(t, (Target{{1, 1.0}}));
  const Batch zero = domain_mixup_batch(syn, real, all_psi(0.0, 3));
  EXPECT_EQ(zero.observations, real.observations);
  for (const auto& t : zero.targets) EXPECT_EQ(t, (Target{{7, 1.0}}));
  const Batch mid = domain_mixup_batch(syn, real, all_psi(0.5, 3));
  EXPECT_EQ(mid.observations, RowMatrix::Zero(3, 4));
  for (const auto& t : mid.targets) EXPECT_EQ(t, (Target{{1, 0.5}, {7, 0.5}}));
  EXPECT_EQ(mid.psi, std::vector<double>(3, 0.5));
}

TEST(DomainMixup, RejectsUnequalBatches) {
  Rng rng(1);
  EXPECT_THROW(domain_mixup_batch(constant_batch(0.1, 0, 3), constant_batch(0.1, 1, 4), rng), InvalidArgument);
}

TEST(DomainMixup, RandomPsiOnGridPerPair) {
  Rng rng(2);
  const Batch out = domain_mixup_batch(constant_batch(1.0, 0, 500, 1), constant_batch(0.0, 1, 500, 1), rng);
  std::set<double> seen;
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(out.psi[i] * 20.0, std::round(out.psi[i] * 20.0), 1e-12);
    EXPECT_EQ(out.observations(static_cast<Eigen::Index>(i), 0), out.psi[i]);
    seen.insert(out.psi[i]);
  }
  EXPECT_EQ(seen.size(), 21u);
}

// --- schedule and SGD -----------------------------------------------------------

TEST(Schedule, StepDecay) {
  const TrainConfig cfg;
  EXPECT_EQ(lr_at_epoch(cfg, 0), 0.1);
  EXPECT_EQ(lr_at_epoch(cfg, 23), 0.1);
  EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 24), 0.01);
  EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 30), 0.001);
  EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 39), 0.0001);
  EXPECT_THROW(lr_at_epoch(cfg, 40), InvalidArgument);
}

TEST(TrainConfigValidation, DecayEpochsMustIncreaseBelowEpochs) {
  TrainConfig cfg;
  cfg.decay_epochs = {24, 24, 36};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.decay_epochs = {24, 30, 40};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.decay_epochs = {24, 30, 36};
  EXPECT_NO_THROW(cfg.validate());
}

namespace {
EmbeddingNetwork tiny_net() { return EmbeddingNetwork::initialize(NetworkShape{4, {3}, 2, 3}, 5); }
Gradients constant_grads(const EmbeddingNetwork& net, double v) {
  Gradients g = net.params.zeros_like();
  g.for_each_scalar([v](double& x) { x = v; });
  return g;
}
}  // namespace

TEST(SgdStep, ZeroLearningRateStillAccumulatesMomentum) {
  EmbeddingNetwork net = tiny_net();
  const EmbeddingNetwork before = net;
  MomentumState v = net.params.zeros_like();
  sgd_step(net, constant_grads(net, 0.5), v, 0.0, 0.9, 0.0);
  EXPECT_EQ(net, before);
  v.for_each_scalar([](double& x) { EXPECT_EQ(x, 0.5); });
}

TEST(SgdStep, PlainGradientDescent) {
  EmbeddingNetwork net = tiny_net();
  const EmbeddingNetwork before = net;
  MomentumState v = net.params.zeros_like();
  sgd_step(net, constant_grads(net, 0.25), v, 0.1, 0.0, 0.0);
  std::vector<double> a, b;
  net.params.for_each_scalar([&](double& x) { a.push_back(x); });
  EmbeddingNetwork copy = before;
  copy.params.for_each_scalar([&](double& x) { b.push_back(x - 0.1 * 0.25); });
  EXPECT_EQ(a, b);
}

TEST(SgdStep, MomentumUnrollsToOnePointNine) {
  EmbeddingNetwork net = tiny_net();
  MomentumState v = net.params.zeros_like();
  const double lr = 0.05, g = 0.3;
  sgd_step(net, constant_grads(net, g), v, lr, 0.9, 0.0);
  EmbeddingNetwork mid = net;
  sgd_step(net, constant_grads(net, g), v, lr, 0.9, 0.0);
  std::vector<double> before, after;
  mid.params.for_each_scalar([&](double& x) { before.push_back(x); });
  net.params.for_each_scalar([&](double& x) { after.push_back(x); });
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i] - after[i], lr * 1.9 * g, 1e-15);
}

TEST(SgdStep, WeightDecayEntersTheVelocity) {
  EmbeddingNetwork net = tiny_net();
  const double p0 = net.params.class_weights(0, 0);
  MomentumState v = net.params.zeros_like();
  sgd_step(net, net.params.zeros_like(), v, 0.1, 0.9, 0.01);
  EXPECT_DOUBLE_EQ(v.class_weights(0, 0), 0.01 * p0);
  EXPECT_DOUBLE_EQ(net.params.class_weights(0, 0), p0 - 0.1 * 0.01 * p0);
}

TEST(SgdStep, RejectsMismatchAndNonFinite) {
  EmbeddingNetwork net = tiny_net();
  MomentumState v = net.params.zeros_like();
  Gradients wrong = EmbeddingNetwork::initialize(NetworkShape{4, {3}, 2, 4}, 1).params.zeros_like();
  EXPECT_THROW(sgd_step(net, wrong, v, 0.1, 0.9, 0.0), InvalidArgument);
  Gradients bad = net.params.zeros_like();
  bad.biases[0](0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sgd_step(net, bad, v, 0.1, 0.9, 0.0), NumericalError);
}

// --- train ------------------------------------------------------------------------

TEST(Train, SeparableDataLossDecreases) {
  const Dataset ds = separable_dataset();
  const auto res = train(small_config(), MarginConfig::arcface(0.2, 8.0), TrainingData{&ds, nullptr});
  ASSERT_EQ(res.history.size(), 10u);
  EXPECT_LT(res.history.back().mean_loss, res.history.front().mean_loss);
  EXPECT_EQ(res.history.front().lr, 0.1);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const Dataset ds = separable_dataset();
  TrainConfig cfg = small_config();
  cfg.base_lr = 0.0;
  const TrainingData data{&ds, nullptr};
  const auto res = train(cfg, MarginConfig::arcface(), data);
  EXPECT_EQ(res.net, initial_network(cfg, data));
}

TEST(Train, DeterministicForFixedSeed) {
  const Dataset ds = separable_dataset();
  const auto a = train(small_config(), MarginConfig::cosface(), TrainingData{&ds, nullptr});
  const auto b = train(small_config(), MarginConfig::cosface(), TrainingData{&ds, nullptr});
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.momentum, b.momentum);
}

TEST(Train, ResumeMatchesStraightThrough) {
  const Dataset ds = separable_dataset();
  const TrainConfig cfg = small_config(6);
  const TrainingData data{&ds, nullptr};
  const auto full = train(cfg, MarginConfig::arcface(), data);
  const auto first = train(cfg, MarginConfig::arcface(), data, std::nullopt, 2);
  const auto rest = train(cfg, MarginConfig::arcface(), data, TrainState{first.net, first.momentum, 2});
  EXPECT_EQ(rest.net, full.net);
  EXPECT_EQ(rest.momentum, full.momentum);
}

TEST(Train, DomainMixupUsesUnionLabelSpace) {
  const Dataset syn = separable_dataset();
  Dataset real = separable_dataset();
  for (auto& s : real.samples) s.domain = Domain::real_proxy;
  TrainConfig cfg = small_config(3);
  cfg.domain_mixup = true;
  const auto res = train(cfg, MarginConfig::arcface(), TrainingData{&syn, &real});
  EXPECT_EQ(res.net.class_count(), 4u);
  EXPECT_TRUE(res.net.params.all_finite());
  cfg.domain_mixup = true;
  EXPECT_THROW(train(cfg, MarginConfig::arcface(), TrainingData{&syn, nullptr}), InvalidArgument);
}

TEST(Train, NonFiniteLossReportsEpoch) {
  Dataset ds = separable_dataset();
  ds.samples[5].observation[2] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(small_config(), MarginConfig::arcface(), TrainingData{&ds, nullptr});
    FAIL() << "expected a training failure";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
  }
}

#include <gtest/gtest.h>

#include <cmath>

#include "support/testing.hpp"

namespace chatternet {
namespace {

using testing::random_tokens;
using testing::randomize_alive;
using testing::tiny_config;

SubmissionInput input_for(const std::vector<TokenId>& ids, int subreddit, double rate, int m, CounterRng& rng) {
  SubmissionInput in;
  in.tokens = ids;
  in.subreddit = subreddit;
  in.rate = rate;
  for (int l = 0; l < m; ++l) in.bins.counts.push_back(static_cast<std::int64_t>(rng.below(9)));
  return in;
}

Vector random_influence(const ModelConfig& c, CounterRng& rng) {
  Vector g(c.influence_dim());
  for (Index i = 0; i < g.size(); ++i) g(i) = std::tanh(rng.normal());
  return g;
}

TEST(ModelStructure, ZeroShotPredictionIsTheBase) {
  for (auto v : {Variant::full, Variant::news_only, Variant::submission_only, Variant::static_kernels}) {
    ChatterNet model(tiny_config(v, 0), 3);
    CounterRng rng(11, 0);
    randomize_alive(model, rng);
    for (int t = 0; t < 20; ++t) {
      const auto ids = random_tokens(rng, 8, 14, 1 + static_cast<int>(rng.below(8)));
      const auto p = model.forward(input_for(ids, static_cast<int>(rng.below(3)), rng.uniform(0, 4), 0, rng),
                                   random_influence(model.config(), rng));
      EXPECT_EQ(p.y_hat, p.base);
      EXPECT_EQ(p.base, p.r * p.b_tilde);
    }
  }
}

TEST(ModelStructure, UnitGainReproducesTheStaticKernels) {
  ChatterNet model(tiny_config(), 4);
  CounterRng rng(12, 0);
  randomize_alive(model, rng);
  auto& p = model.params();
  for (const auto& g : model.gain_projections()) {
    p[g.from_influence].setZero();
    p[g.from_subreddit].setZero();
    p[g.bias].setOnes();
  }
  for (int t = 0; t < 20; ++t) {
    const auto ids = random_tokens(rng, 8, 14, 1 + static_cast<int>(rng.below(8)));
    const Vector g = random_influence(model.config(), rng);
    const Vector u = model.subreddit_vector(static_cast<int>(rng.below(3)));
    EXPECT_NEAR(model.tec_potential(ids, g, u, true), model.tec_potential(ids, g, u, false), 1e-12);
    for (std::size_t l = 0; l < model.gain_projections().size(); ++l) {
      EXPECT_TRUE(model.tec_kernel(l, g, u) == p[model.tec_layers()[l]->weight]);
    }
  }
}

TEST(ModelStructure, ZeroInfluenceAndBiasesGiveZeroKernels) {
  ChatterNet model(tiny_config(), 5);
  CounterRng rng(13, 0);
  randomize_alive(model, rng);
  for (const auto& g : model.gain_projections()) model.params()[g.bias].setZero();
  const Vector g = Vector::Zero(model.config().influence_dim());
  const Vector u = Vector::Zero(model.config().subreddit_dim);
  for (std::size_t l = 0; l < model.gain_projections().size(); ++l) {
    EXPECT_TRUE(model.tec_kernel(l, g, u).isZero(0.0));
  }
}

TEST(ModelStructure, GainUsesLeakySlope) {
  ChatterNet model(tiny_config(), 6);
  auto& p = model.params();
  const auto& proj = model.gain_projections().front();
  p[proj.from_influence].setZero();
  p[proj.from_subreddit].setZero();
  p[proj.bias].setConstant(-1.0);
  const Vector gn = model.gain(0, Vector::Zero(model.config().influence_dim()),
                               Vector::Zero(model.config().subreddit_dim));
  for (Index i = 0; i < gn.size(); ++i) EXPECT_DOUBLE_EQ(gn(i), -0.2);
}

TEST(ModelStructure, ActivityScaleAndBaseBounds) {
  ChatterNet model(tiny_config(), 7);
  model.params()[model.activity_weight_id()].setConstant(0.0);
  model.params()[model.activity_bias_id()].setConstant(0.0);
  EXPECT_EQ(model.activity_scale(3.0), 0.5);
  EXPECT_EQ(ChatterNet::base_intensity(4.0, 0.5), 2.0);
  EXPECT_EQ(ChatterNet::base_intensity(0.0, 0.7), 0.0);
  model.params()[model.activity_weight_id()].setConstant(2.0);
  const double big = model.activity_scale(15.0);
  EXPECT_GT(big, 0.999);
  EXPECT_LT(big, 1.0);

  CounterRng rng(14, 0);
  for (int trial = 0; trial < 5; ++trial) {
    ChatterNet m(tiny_config(Variant::full, 2), 100 + static_cast<std::uint64_t>(trial));
    randomize_alive(m, rng);
    for (int t = 0; t < 20; ++t) {
      const auto ids = random_tokens(rng, 8, 14, 1 + static_cast<int>(rng.below(8)));
      const auto p = m.forward(input_for(ids, 1, rng.uniform(0, 10), 2, rng), random_influence(m.config(), rng));
      EXPECT_GT(p.r, 0.0);
      EXPECT_LT(p.r, 1.0);
      EXPECT_LE(p.base, p.b_tilde);
      EXPECT_GE(p.b_tilde, 0.0);
      EXPECT_GE(p.y_hat, 0.0);
      EXPECT_TRUE(std::isfinite(p.y_hat) && std::isfinite(p.base) && std::isfinite(p.b_tilde));
    }
  }
}

TEST(ModelStructure, StaticVariantIgnoresInfluence) {
  ChatterNet model(tiny_config(Variant::static_kernels), 8);
  CounterRng rng(15, 0);
  randomize_alive(model, rng);
  const auto ids = random_tokens(rng, 8, 14, 6);
  const auto in = input_for(ids, 2, 1.3, 0, rng);
  const double a = model.forward(in, random_influence(model.config(), rng)).y_hat;
  const double b = model.forward(in, Vector::Zero(model.config().influence_dim())).y_hat;
  EXPECT_EQ(a, b);
}

TEST(ModelStructure, VariantMasking) {
  const Vector g = Vector::LinSpaced(6, 1.0, 6.0);
  EXPECT_TRUE(ChatterNet(tiny_config(Variant::full), 1).mask_influence(g) == g);
  const Vector news = ChatterNet(tiny_config(Variant::news_only), 1).mask_influence(g);
  EXPECT_TRUE(news.tail(3).isZero(0.0));
  EXPECT_TRUE(news.head(3) == g.head(3));
  const Vector subs = ChatterNet(tiny_config(Variant::submission_only), 1).mask_influence(g);
  EXPECT_TRUE(subs.head(3).isZero(0.0));
  EXPECT_TRUE(subs.tail(3) == g.tail(3));
}

TEST(ModelStructure, LstmChatterCountNeedsObservations) {
  EXPECT_THROW(ChatterNet(tiny_config(Variant::lstm_cc, 0), 1), ConfigError);
  ChatterNet model(tiny_config(Variant::lstm_cc, 2), 1);
  CounterRng rng(16, 0);
  const auto ids = random_tokens(rng, 8, 14, 3);
  const auto p = model.forward(input_for(ids, 0, 1.0, 2, rng), random_influence(model.config(), rng));
  EXPECT_FALSE(p.has_base);
  EXPECT_EQ(p.base, 0.0);
  EXPECT_THROW(model.forward(input_for(ids, 0, 1.0, 1, rng), Vector::Zero(6)), DataError);
}

TEST(ModelStructure, HandSetHeadPassesTheBaseThrough) {
  ChatterNet model(tiny_config(Variant::full, 2), 9);
  CounterRng rng(17, 0);
  randomize_alive(model, rng);
  auto& p = model.params();
  p[model.head_weight_id()].setZero();
  p[model.head_weight_id()](0, model.config().lstm_hidden) = 1.0;
  p[model.head_bias_id()].setZero();
  for (double base : {1.7, 0.0, -0.4}) {
    ObservationBins bins;
    bins.counts = {3, 1};
    EXPECT_EQ(model.observe_and_predict(base, bins), std::max(0.0, base));
  }
  ChatterNet zero_shot(tiny_config(Variant::full, 0), 9);
  EXPECT_EQ(zero_shot.observe_and_predict(1.7, ObservationBins{}), 1.7);
}

TEST(ModelStructure, PaddingBeyondTrueLengthIsIrrelevantAfterReordering) {
  // Swapping two PAD positions changes nothing.
  ChatterNet model(tiny_config(), 10);
  CounterRng rng(18, 0);
  randomize_alive(model, rng);
  auto ids = random_tokens(rng, 8, 14, 4);
  const Vector g = random_influence(model.config(), rng);
  const double a = model.forward(input_for(ids, 1, 0.5, 0, rng), g).y_hat;
  std::swap(ids[5], ids[7]);
  EXPECT_EQ(model.forward(input_for(ids, 1, 0.5, 0, rng), g).y_hat, a);
}

TEST(ModelStructure, ZeroInputsGiveZeroStaticFeatures) {
  ChatterNet model(tiny_config(), 11);
  auto& p = model.params();
  for (ParamId i = 0; i < p.size(); ++i) p[i].setZero();
  const std::vector<TokenId> ids(8, Vocabulary::kPad);
  EXPECT_TRUE(model.static_features(ids, TextRole::submission).isZero(0.0));
  const Vector fsv = model.submission_feature(Vector::Zero(model.config().feature_dim()), 0);
  EXPECT_EQ(fsv.size(), model.config().submission_feature_dim());
  EXPECT_TRUE(fsv.isZero(0.0));
  EXPECT_EQ(model.tec_potential(ids, Vector::Zero(6), Vector::Zero(3)), 0.0);
}

TEST(ModelStructure, EmptyIntervalKeepsZeroState) {
  ChatterNet model(tiny_config(), 12);
  const auto st = model.aggregate(IntervalItems{}, InfluenceState::zeros(model.config()));
  EXPECT_TRUE(st.g.isZero(0.0));
  EXPECT_EQ(st.interval, 1);
}

TEST(ModelStructure, SingleGruStepMatchesHandEvaluation) {
  ModelConfig c = tiny_config(Variant::news_only);
  ChatterNet model(c, 13);
  CounterRng rng(19, 0);
  randomize_alive(model, rng);
  const auto ids = random_tokens(rng, c.news_len, c.vocab_size, 5);
  IntervalItems items;
  items.news.emplace_back(ids);
  InfluenceState prior = InfluenceState::zeros(c);
  for (Index i = 0; i < c.gru_hidden; ++i) prior.h_news(i) = 0.3 * static_cast<double>(i) - 0.2;
  const auto st = model.aggregate(items, prior);

  const Vector x = model.static_features(ids, TextRole::news);
  const auto& p = model.params();
  const auto& gru = model.news_gru();
  const Index H = c.gru_hidden;
  const Vector& h = prior.h_news;
  for (Index i = 0; i < H; ++i) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double az = p[gru.b](i, 0), ar = p[gru.b](H + i, 0);
    for (Index k = 0; k < x.size(); ++k) az += p[gru.w](i, k) * x(k), ar += p[gru.w](H + i, k) * x(k);
    for (Index k = 0; k < H; ++k) az += p[gru.u](i, k) * h(k);
    const double z = sig(az);
    double an = p[gru.b](2 * H + i, 0);
    for (Index k = 0; k < x.size(); ++k) an += p[gru.w](2 * H + i, k) * x(k);
    for (Index k = 0; k < H; ++k) {
      double ark = p[gru.b](H + k, 0);
      for (Index q = 0; q < x.size(); ++q) ark += p[gru.w](H + k, q) * x(q);
      for (Index q = 0; q < H; ++q) ark += p[gru.u](H + k, q) * h(q);
      an += p[gru.u](2 * H + i, k) * sig(ark) * h(k);
    }
    (void)ar;
    const double expected = (1.0 - z) * std::tanh(an) + z * h(i);
    EXPECT_NEAR(st.h_news(i), expected, 1e-12);
  }
  EXPECT_TRUE(st.h_sub.isZero(0.0));
}

TEST(ModelStructure, InitializationIsSeeded) {
  ChatterNet a(tiny_config(), 21), b(tiny_config(), 21), c(tiny_config(), 22);
  for (ParamId i = 0; i < a.params().size(); ++i) EXPECT_TRUE(a.params()[i] == b.params()[i]);
  EXPECT_FALSE(a.params()[a.word_embedding_id()] == c.params()[c.word_embedding_id()]);
  EXPECT_TRUE(a.params()[a.word_embedding_id()].row(Vocabulary::kPad).isZero(0.0));
}

TEST(ModelStructure, HeadStartsFromTheBaseForEverySeed) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ChatterNet model(tiny_config(Variant::full, 3), seed);
    EXPECT_EQ(model.params()[model.head_weight_id()](0, model.config().lstm_hidden), 1.0);
    EXPECT_EQ(model.params()[model.head_bias_id()](0, 0), 0.0);
  }
}

TEST(ModelStructure, ConfigValidation) {
  auto c = tiny_config();
  c.tec_tail_filters = {3, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.branch_kernels = {1, 2, 5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.submission_len = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_variant("static"), Variant::static_kernels);
  EXPECT_THROW(parse_variant("bogus"), ConfigError);
  for (auto v : {Variant::full, Variant::news_only, Variant::submission_only, Variant::static_kernels,
                 Variant::lstm_cc}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
}

}  // namespace
}  // namespace chatternet

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

#include "sscd/model.hpp"
#include "sscd/rng.hpp"

namespace {

using sscd::BackboneConfig;
using sscd::BackboneKind;
using sscd::ChangeDetector;
using sscd::Tensor;
namespace ag = sscd::ag;

Tensor<float> random_image(int n, int h, int w, std::uint64_t seed) {
  Tensor<float> t({n, 3, h, w});
  auto rng = sscd::StreamKey(seed).rng();
  sscd::fill_uniform(t, rng, 0.0, 1.0);
  return t;
}

BackboneConfig tiny_config(std::uint64_t seed = 7) {
  BackboneConfig cfg;
  cfg.kind = BackboneKind::tiny;
  cfg.init_seed = seed;
  return cfg;
}

TEST(Model, TinyStageShapes) {
  ChangeDetector<float> model(tiny_config(), 0);
  auto x = ag::constant(random_image(2, 64, 64, 1));
  ag::NoGradGuard guard;
  auto feats = model.encode(x, true);
  EXPECT_EQ(feats.c1->value.shape(), (std::vector<int>{2, 12, 16, 16}));
  EXPECT_EQ(feats.c4->value.shape(), (std::vector<int>{2, 32, 2, 2}));

  auto bundle = model.difference(x, ag::constant(random_image(2, 64, 64, 2)), true);
  auto logits = model.decode_main(bundle, true);
  EXPECT_EQ(logits->value.shape(), (std::vector<int>{2, 2, 64, 64}));
}

TEST(Model, EncodeRejectsBadInput) {
  ChangeDetector<float> model(tiny_config(), 0);
  ag::NoGradGuard guard;
  EXPECT_THROW(model.encode(ag::constant(random_image(1, 60, 60, 1)), false),
               std::invalid_argument);
  EXPECT_THROW(model.encode(ag::constant(Tensor<float>({1, 1, 64, 64})), false),
               std::invalid_argument);
  EXPECT_THROW(model.encode(ag::constant(Tensor<float>({3, 64, 64})), false),
               std::invalid_argument);
}

TEST(Model, DifferenceIsSymmetricAndZeroOnIdentical) {
  ChangeDetector<float> model(tiny_config(), 0);
  ag::NoGradGuard guard;
  auto a = ag::constant(random_image(1, 64, 64, 3));
  auto b = ag::constant(random_image(1, 64, 64, 4));

  auto ab = model.difference(a, b, false);
  auto ba = model.difference(b, a, false);
  for (std::int64_t i = 0; i < ab.d1->value.numel(); ++i)
    EXPECT_EQ(ab.d1->value[i], ba.d1->value[i]);
  for (std::int64_t i = 0; i < ab.d4->value.numel(); ++i)
    EXPECT_EQ(ab.d4->value[i], ba.d4->value[i]);

  auto aa = model.difference(a, a, false);
  EXPECT_EQ(aa.d1->value.min(), 0.0f);
  EXPECT_EQ(aa.d1->value.max(), 0.0f);
  EXPECT_EQ(aa.d4->value.max(), 0.0f);
}

TEST(Model, TinyDeployedUnderTwoHundredThousandParams) {
  ChangeDetector<float> model(tiny_config(), 0);
  EXPECT_LE(model.deployed_param_count(), 200000);
  EXPECT_GT(model.deployed_param_count(), 0);
}

TEST(Model, GateAndAuxDecodersMatchMainParamCount) {
  ChangeDetector<float> model(tiny_config(), 3);
  const auto main_count = model.decoder_param_count("main");
  EXPECT_EQ(model.decoder_param_count("gate"), main_count);
  for (int k = 0; k < 3; ++k)
    EXPECT_EQ(model.decoder_param_count("aux" + std::to_string(k)), main_count);
}

TEST(Model, DeployedCountExcludesAuxBranches) {
  ChangeDetector<float> with_aux(tiny_config(), 4);
  ChangeDetector<float> without(tiny_config(), 0);
  EXPECT_EQ(with_aux.deployed_param_count(), without.deployed_param_count());
  EXPECT_EQ(with_aux.params().total_params(),
            with_aux.deployed_param_count() +
                4 * with_aux.decoder_param_count("aux0"));
}

TEST(Model, GateLogitsDifferFromMain) {
  ChangeDetector<float> model(tiny_config(), 0);
  ag::NoGradGuard guard;
  auto bundle = model.difference(ag::constant(random_image(1, 64, 64, 5)),
                                 ag::constant(random_image(1, 64, 64, 6)), true);
  auto main_logits = model.decode_main(bundle, true);
  auto gate_logits = model.decode_gate(bundle, true);
  bool any_diff = false;
  for (std::int64_t i = 0; i < main_logits->value.numel(); ++i)
    if (main_logits->value[i] != gate_logits->value[i]) any_diff = true;
  EXPECT_TRUE(any_diff);
}

TEST(Model, AuxInitializedIndependentlyPerBranch) {
  ChangeDetector<float> model(tiny_config(), 2);
  ag::NoGradGuard guard;
  auto bundle = model.difference(ag::constant(random_image(1, 64, 64, 7)),
                                 ag::constant(random_image(1, 64, 64, 8)), true);
  auto a0 = model.decode_aux(0, bundle.d4, bundle.d1, 64, 64, true);
  auto a1 = model.decode_aux(1, bundle.d4, bundle.d1, 64, 64, true);
  bool any_diff = false;
  for (std::int64_t i = 0; i < a0->value.numel(); ++i)
    if (a0->value[i] != a1->value[i]) any_diff = true;
  EXPECT_TRUE(any_diff);
  EXPECT_THROW(model.decode_aux(2, bundle.d4, bundle.d1, 64, 64, true),
               std::out_of_range);
}

TEST(Model, CopiedAuxReproducesMainExactly) {
  ChangeDetector<float> model(tiny_config(), 1);
  model.params().copy_subtree("dec.main.", "dec.aux0.");
  ag::NoGradGuard guard;
  auto bundle = model.difference(ag::constant(random_image(2, 64, 64, 9)),
                                 ag::constant(random_image(2, 64, 64, 10)), true);
  // Training-mode batch norm uses batch statistics, so equality is exact and
  // independent of running buffers.
  auto main_logits = model.decode_main(bundle, true);
  auto aux_logits = model.decode_aux(0, bundle.d4, bundle.d1, 64, 64, true);
  ASSERT_EQ(main_logits->value.shape(), aux_logits->value.shape());
  for (std::int64_t i = 0; i < main_logits->value.numel(); ++i)
    EXPECT_EQ(main_logits->value[i], aux_logits->value[i]);
}

TEST(Model, InitIsSeedDeterministicAndPerName) {
  ChangeDetector<float> m1(tiny_config(11), 0);
  ChangeDetector<float> m2(tiny_config(11), 2);
  ChangeDetector<float> m3(tiny_config(12), 0);
  // Adding aux branches must not disturb encoder or main decoder draws.
  for (const auto& [name, var] : m1.params().params()) {
    const auto& other = m2.params().params().at(name);
    ASSERT_EQ(var->value.shape(), other->value.shape()) << name;
    for (std::int64_t i = 0; i < var->value.numel(); ++i)
      ASSERT_EQ(var->value[i], other->value[i]) << name;
  }
  bool any_diff = false;
  for (const auto& [name, var] : m1.params().params()) {
    const auto& other = m3.params().params().at(name);
    for (std::int64_t i = 0; i < var->value.numel(); ++i)
      if (var->value[i] != other->value[i]) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, ForwardProbShapeAndRange) {
  ChangeDetector<float> model(tiny_config(), 0);
  auto prob = model.forward_prob(random_image(2, 64, 64, 13),
                                 random_image(2, 64, 64, 14));
  EXPECT_EQ(prob.shape(), (std::vector<int>{2, 64, 64}));
  EXPECT_GE(prob.min(), 0.0f);
  EXPECT_LE(prob.max(), 1.0f);
  EXPECT_TRUE(prob.all_finite());
}

TEST(Model, ChangeProbabilityIsBinarySoftmax) {
  Tensor<float> logits({1, 2, 1, 2});
  logits.at(0, 0, 0, 0) = 0.0f;               // class-0 logit, pixel 0
  logits.at(0, 1, 0, 0) = std::log(3.0f);     // class-1 logit, pixel 0
  logits.at(0, 0, 0, 1) = 2.0f;
  logits.at(0, 1, 0, 1) = 2.0f;
  auto p = sscd::change_probability(logits);
  EXPECT_EQ(p.shape(), (std::vector<int>{1, 1, 2}));
  EXPECT_NEAR(p.at(0, 0, 0), 0.75f, 1e-6f);
  EXPECT_NEAR(p.at(0, 0, 1), 0.5f, 1e-6f);
}

TEST(Model, DifferenceFeaturesHelper) {
  Tensor<float> a({1, 2, 1, 1}, std::vector<float>{1.0f, -2.0f});
  Tensor<float> b({1, 2, 1, 1}, std::vector<float>{4.0f, -0.5f});
  auto d = sscd::difference_features(a, b);
  EXPECT_EQ(d[0], 3.0f);
  EXPECT_EQ(d[1], 1.5f);
  Tensor<float> wrong({1, 2, 1, 2});
  EXPECT_THROW(sscd::difference_features(a, wrong), std::invalid_argument);
}

TEST(Model, Resnet50DeployedCountNearReference) {
  BackboneConfig cfg;
  cfg.kind = BackboneKind::resnet50;
  cfg.init_seed = 0;
  ChangeDetector<float> model(cfg, 0);
  const double deployed = static_cast<double>(model.deployed_param_count());
  const double reference = 57.3e6;
  EXPECT_LT(std::abs(deployed - reference) / reference, 0.05)
      << "deployed=" << deployed;
  // Encoder alone should carry the familiar ~23.5M backbone weight budget.
  EXPECT_GT(model.encoder_param_count(), 20000000);
  EXPECT_LT(model.encoder_param_count(), 26000000);
}

}  // namespace

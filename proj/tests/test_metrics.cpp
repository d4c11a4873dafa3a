#include <gtest/gtest.h>

#include "sscd/metrics.hpp"
#include "sscd/rng.hpp"

namespace {

using sscd::ConfusionCounts;
using sscd::Tensor;

Tensor<std::uint8_t> random_mask(int h, int w, sscd::Rng& rng, double p) {
  Tensor<std::uint8_t> m({h, w});
  for (std::int64_t i = 0; i < m.numel(); ++i)
    m[i] = sscd::bernoulli(rng, p) ? 1 : 0;
  return m;
}

TEST(Metrics, ConfusionMatchesBruteForce) {
  auto rng = sscd::StreamKey(1).rng();
  for (int trial = 0; trial < 200; ++trial) {
    auto pred = random_mask(9, 7, rng, 0.4);
    auto truth = random_mask(9, 7, rng, 0.3);
    auto c = sscd::count_confusion(pred, truth);
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
      if (pred[i] && truth[i]) ++tp;
      if (pred[i] && !truth[i]) ++fp;
      if (!pred[i] && truth[i]) ++fn;
      if (!pred[i] && !truth[i]) ++tn;
    }
    ASSERT_EQ(c.tp, tp);
    ASSERT_EQ(c.tn, tn);
    ASSERT_EQ(c.fp, fp);
    ASSERT_EQ(c.fn, fn);
    ASSERT_EQ(c.total(), pred.numel());
  }
}

TEST(Metrics, NonBinaryValuesCountAsChange) {
  Tensor<std::uint8_t> pred({1, 2}, std::vector<std::uint8_t>{255, 0});
  Tensor<std::uint8_t> truth({1, 2}, std::vector<std::uint8_t>{7, 0});
  auto c = sscd::count_confusion(pred, truth);
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.tn, 1);
}

TEST(Metrics, IouHandValues) {
  ConfusionCounts c;
  c.tp = 6;
  c.fp = 2;
  c.fn = 4;
  c.tn = 100;
  EXPECT_DOUBLE_EQ(sscd::iou_from_counts(c), 0.5);
  EXPECT_DOUBLE_EQ(sscd::overall_accuracy(c), 106.0 / 112.0);
}

TEST(Metrics, EmptyUnionIsPerfect) {
  Tensor<std::uint8_t> zero({4, 4}, std::uint8_t{0});
  EXPECT_DOUBLE_EQ(sscd::binary_iou(zero, zero), 1.0);
  auto m = sscd::EvalMetrics::from_counts(sscd::count_confusion(zero, zero));
  EXPECT_DOUBLE_EQ(m.iou, 1.0);
  EXPECT_DOUBLE_EQ(m.oa, 1.0);
}

TEST(Metrics, ShapeMismatchThrows) {
  Tensor<std::uint8_t> a({2, 2}, std::uint8_t{0});
  Tensor<std::uint8_t> b({2, 3}, std::uint8_t{0});
  EXPECT_THROW(sscd::count_confusion(a, b), std::invalid_argument);
}

TEST(Metrics, CountsAccumulate) {
  ConfusionCounts a{1, 2, 3, 4};
  ConfusionCounts b{10, 20, 30, 40};
  a += b;
  EXPECT_EQ(a.tp, 11);
  EXPECT_EQ(a.tn, 22);
  EXPECT_EQ(a.fp, 33);
  EXPECT_EQ(a.fn, 44);
}

TEST(Metrics, ErrorMapColors) {
  Tensor<std::uint8_t> pred({2, 2}, std::vector<std::uint8_t>{1, 1, 0, 0});
  Tensor<std::uint8_t> truth({2, 2}, std::vector<std::uint8_t>{1, 0, 1, 0});
  auto rgb = sscd::render_error_map(pred, truth);
  ASSERT_EQ(rgb.shape(), (std::vector<int>{2, 2, 3}));
  // TP -> white
  EXPECT_EQ(rgb.at(0, 0, 0), 255);
  EXPECT_EQ(rgb.at(0, 0, 1), 255);
  EXPECT_EQ(rgb.at(0, 0, 2), 255);
  // FP -> red
  EXPECT_EQ(rgb.at(0, 1, 0), 255);
  EXPECT_EQ(rgb.at(0, 1, 1), 0);
  EXPECT_EQ(rgb.at(0, 1, 2), 0);
  // FN -> green
  EXPECT_EQ(rgb.at(1, 0, 0), 0);
  EXPECT_EQ(rgb.at(1, 0, 1), 255);
  EXPECT_EQ(rgb.at(1, 0, 2), 0);
  // TN -> black
  EXPECT_EQ(rgb.at(1, 1, 0), 0);
  EXPECT_EQ(rgb.at(1, 1, 1), 0);
  EXPECT_EQ(rgb.at(1, 1, 2), 0);

  Tensor<std::uint8_t> batched({1, 2, 2}, std::uint8_t{0});
  EXPECT_THROW(sscd::render_error_map(batched, batched), std::invalid_argument);
}

TEST(Metrics, ThresholdIsStrictAndShapePreserving) {
  Tensor<float> prob({2, 1, 2},
                     std::vector<float>{0.4f, 0.5f, 0.500001f, 1.0f});
  auto mask = sscd::threshold_probability(prob);
  EXPECT_EQ(mask.shape(), prob.shape());
  EXPECT_EQ(mask[0], 0);
  EXPECT_EQ(mask[1], 0);  // exactly the threshold stays negative
  EXPECT_EQ(mask[2], 1);
  EXPECT_EQ(mask[3], 1);

  auto strict = sscd::threshold_probability(prob, 0.95);
  EXPECT_EQ(strict[2], 0);
  EXPECT_EQ(strict[3], 1);
}

}  // namespace

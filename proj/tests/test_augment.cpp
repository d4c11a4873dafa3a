#include <gtest/gtest.h>

#include <cmath>

#include "sscd/augment.hpp"

namespace {

using sscd::CutmixParams;
using sscd::ImagePair;
using sscd::StrongAugmentParams;
using sscd::Tensor;
using sscd::WeakAugmentParams;

ImagePair make_pair(int h, int w, std::uint64_t seed, bool with_label = true) {
  ImagePair p;
  p.a = Tensor<float>({3, h, w});
  p.b = Tensor<float>({3, h, w});
  auto rng = sscd::StreamKey(seed).rng();
  sscd::fill_uniform(p.a, rng, 0.0f, 1.0f);
  sscd::fill_uniform(p.b, rng, 0.0f, 1.0f);
  if (with_label) {
    Tensor<std::uint8_t> m({h, w});
    for (std::int64_t i = 0; i < m.numel(); ++i)
      m[i] = sscd::bernoulli(rng, 0.3) ? 1 : 0;
    p.label = m;
  }
  p.id = "pair" + std::to_string(seed);
  return p;
}

WeakAugmentParams weak_params(int crop, double lo = 0.5, double hi = 2.0) {
  WeakAugmentParams p;
  p.scale_lo = lo;
  p.scale_hi = hi;
  p.crop_h = crop;
  p.crop_w = crop;
  return p;
}

TEST(Augment, WeakIsStreamDeterministic) {
  auto pair = make_pair(32, 32, 1);
  auto params = weak_params(16);
  auto r1 = sscd::StreamKey(9).with("weak").with(std::uint64_t{3}).rng();
  auto r2 = sscd::StreamKey(9).with("weak").with(std::uint64_t{3}).rng();
  auto a1 = sscd::weak_augment(pair, params, r1);
  auto a2 = sscd::weak_augment(pair, params, r2);
  for (std::int64_t i = 0; i < a1.pair.a.numel(); ++i)
    ASSERT_EQ(a1.pair.a[i], a2.pair.a[i]);
  for (std::int64_t i = 0; i < a1.pair.label->numel(); ++i)
    ASSERT_EQ((*a1.pair.label)[i], (*a2.pair.label)[i]);
  EXPECT_EQ(a1.transform.crop_top, a2.transform.crop_top);
  EXPECT_EQ(a1.transform.flipped, a2.transform.flipped);
}

TEST(Augment, WeakAppliesOneTransformToAllPlanes) {
  auto pair = make_pair(48, 40, 2);
  auto params = weak_params(24);
  for (int trial = 0; trial < 25; ++trial) {
    auto rng = sscd::StreamKey(50).with("trial").with(static_cast<std::uint64_t>(trial)).rng();
    auto out = sscd::weak_augment(pair, params, rng);
    // Replaying the recorded transform must reproduce every plane bit-exactly.
    auto again_a = sscd::weak_transform_image(pair.a, out.transform);
    auto again_b = sscd::weak_transform_image(pair.b, out.transform);
    auto again_m = sscd::weak_transform_mask(*pair.label, out.transform);
    for (std::int64_t i = 0; i < again_a.numel(); ++i) {
      ASSERT_EQ(out.pair.a[i], again_a[i]);
      ASSERT_EQ(out.pair.b[i], again_b[i]);
    }
    for (std::int64_t i = 0; i < again_m.numel(); ++i)
      ASSERT_EQ((*out.pair.label)[i], again_m[i]);
  }
}

TEST(Augment, WeakOutputAlwaysCropSized) {
  auto pair = make_pair(32, 32, 3);
  for (double s : {0.25, 1.0, 2.0}) {
    auto rng = sscd::StreamKey(60).with("s").with(static_cast<std::uint64_t>(s * 4)).rng();
    auto out = sscd::weak_augment(pair, weak_params(24, s, s), rng);
    EXPECT_EQ(out.pair.a.shape(), (std::vector<int>{3, 24, 24}));
    EXPECT_EQ(out.pair.b.shape(), (std::vector<int>{3, 24, 24}));
    EXPECT_EQ(out.pair.label->shape(), (std::vector<int>{24, 24}));
    for (std::int64_t i = 0; i < out.pair.label->numel(); ++i)
      ASSERT_LE((*out.pair.label)[i], 1);
  }
}

TEST(Augment, WeakPixelMappingAtUnitScale) {
  // With scale fixed at 1 the transform is crop-then-flip; every output pixel
  // must equal the source at the mapped coordinate.
  const int h = 20, w = 28, c = 12;
  ImagePair pair;
  pair.a = Tensor<float>({3, h, w});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        pair.a.at(ch, y, x) = static_cast<float>(ch * h * w + y * w + x);
  pair.b = pair.a;

  auto rng = sscd::StreamKey(70).rng();
  auto out = sscd::weak_augment(pair, weak_params(c, 1.0, 1.0), rng);
  const auto& t = out.transform;
  ASSERT_EQ(t.resized_h, h);
  ASSERT_EQ(t.resized_w, w);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < c; ++y)
      for (int x = 0; x < c; ++x) {
        const int sx = t.flipped ? t.crop_left + (c - 1 - x) : t.crop_left + x;
        ASSERT_EQ(out.pair.a.at(ch, y, x), pair.a.at(ch, t.crop_top + y, sx));
      }
}

TEST(Augment, WeakRejectsBadInputs) {
  auto pair = make_pair(16, 16, 4);
  auto rng = sscd::StreamKey(80).rng();
  ImagePair bad = pair;
  bad.b = Tensor<float>({3, 16, 17});
  EXPECT_THROW(sscd::weak_augment(bad, weak_params(8), rng), std::invalid_argument);

  ImagePair bad_label = pair;
  bad_label.label = Tensor<std::uint8_t>({15, 16}, std::uint8_t{0});
  EXPECT_THROW(sscd::weak_augment(bad_label, weak_params(8), rng),
               std::invalid_argument);

  EXPECT_THROW(sscd::weak_augment(pair, weak_params(0), rng),
               std::invalid_argument);
  EXPECT_THROW(sscd::weak_augment(pair, weak_params(8, 2.0, 0.5), rng),
               std::invalid_argument);
}

TEST(Augment, StrongIdentityWhenDisabled) {
  auto pair = make_pair(16, 16, 5);
  StrongAugmentParams p;
  p.jitter_prob = 0.0;
  p.blur_prob = 0.0;
  auto rng = sscd::StreamKey(90).rng();
  auto out = sscd::strong_augment(pair, p, rng);
  for (std::int64_t i = 0; i < pair.a.numel(); ++i) {
    ASSERT_EQ(out.a[i], pair.a[i]);
    ASSERT_EQ(out.b[i], pair.b[i]);
  }
  EXPECT_EQ(out.id, pair.id);
}

TEST(Augment, StrongNeverTouchesGeometryOrLabel) {
  auto pair = make_pair(24, 20, 6);
  StrongAugmentParams p;  // defaults enable jitter and blur
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = sscd::StreamKey(91).with("t").with(static_cast<std::uint64_t>(trial)).rng();
    auto out = sscd::strong_augment(pair, p, rng);
    ASSERT_EQ(out.a.shape(), pair.a.shape());
    ASSERT_EQ(out.b.shape(), pair.b.shape());
    ASSERT_TRUE(out.label.has_value());
    for (std::int64_t i = 0; i < pair.label->numel(); ++i)
      ASSERT_EQ((*out.label)[i], (*pair.label)[i]);
    ASSERT_GE(out.a.min(), 0.0f);
    ASSERT_LE(out.a.max(), 1.0f);
  }
}

TEST(Augment, StrongViewsDrawIndependently) {
  ImagePair pair = make_pair(16, 16, 7, false);
  pair.b = pair.a;  // identical inputs; independent draws should split them
  StrongAugmentParams p;
  p.jitter_prob = 1.0;
  p.blur_prob = 0.0;
  bool any_diff = false;
  for (int trial = 0; trial < 10 && !any_diff; ++trial) {
    auto rng = sscd::StreamKey(92).with("t").with(static_cast<std::uint64_t>(trial)).rng();
    auto out = sscd::strong_augment(pair, p, rng);
    for (std::int64_t i = 0; i < out.a.numel(); ++i)
      if (out.a[i] != out.b[i]) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Augment, StrongIsStreamDeterministic) {
  auto pair = make_pair(16, 16, 8);
  StrongAugmentParams p;
  auto r1 = sscd::StreamKey(93).rng();
  auto r2 = sscd::StreamKey(93).rng();
  auto o1 = sscd::strong_augment(pair, p, r1);
  auto o2 = sscd::strong_augment(pair, p, r2);
  for (std::int64_t i = 0; i < o1.a.numel(); ++i) {
    ASSERT_EQ(o1.a[i], o2.a[i]);
    ASSERT_EQ(o1.b[i], o2.b[i]);
  }
}

TEST(Augment, CutmixRectGeometry) {
  CutmixParams p;
  p.prob = 1.0;
  auto rng = sscd::StreamKey(100).rng();
  const int h = 64, w = 64;
  for (int trial = 0; trial < 500; ++trial) {
    auto draw = sscd::cutmix_sample_rects(6, h, w, p, rng);
    for (int i = 0; i < 6; ++i) {
      ASSERT_TRUE(draw.rects[i].has_value());
      const auto& r = *draw.rects[i];
      ASSERT_GE(r.top, 0);
      ASSERT_GE(r.left, 0);
      ASSERT_LE(r.top + r.height, h);
      ASSERT_LE(r.left + r.width, w);
      ASSERT_GE(r.height, 1);
      ASSERT_GE(r.width, 1);
      const double area =
          static_cast<double>(r.height) * r.width / (static_cast<double>(h) * w);
      ASSERT_GE(area, 0.05);  // rounding slack around the [0.1, 0.5] draw
      ASSERT_LE(area, 0.60);
      ASSERT_NE(draw.donors[i], i);
      ASSERT_GE(draw.donors[i], 0);
      ASSERT_LT(draw.donors[i], 6);
    }
  }
}

TEST(Augment, CutmixProbZeroAndSingletonNeverMix) {
  CutmixParams off;
  off.prob = 0.0;
  auto rng = sscd::StreamKey(101).rng();
  auto draw = sscd::cutmix_sample_rects(4, 32, 32, off, rng);
  for (int i = 0; i < 4; ++i) {
    EXPECT_FALSE(draw.rects[i].has_value());
    EXPECT_EQ(draw.donors[i], -1);
  }

  CutmixParams on;
  on.prob = 1.0;
  auto single = sscd::cutmix_sample_rects(1, 32, 32, on, rng);
  EXPECT_FALSE(single.rects[0].has_value());
}

TEST(Augment, CutmixBatchPastesDonorPixelsExactly) {
  const int n = 4, h = 24, w = 24;
  std::vector<ImagePair> pairs;
  std::vector<Tensor<std::uint8_t>> pseudo;
  for (int i = 0; i < n; ++i) {
    auto p = make_pair(h, w, 200 + i, false);
    pairs.push_back(p);
    Tensor<std::uint8_t> m({h, w}, static_cast<std::uint8_t>(i % 2));
    pseudo.push_back(m);
  }
  CutmixParams params;
  params.prob = 1.0;
  auto rng = sscd::StreamKey(102).rng();
  auto res = sscd::cutmix_batch(pairs, pseudo, params, rng);

  for (int i = 0; i < n; ++i) {
    ASSERT_TRUE(res.rects[i].has_value());
    const auto& r = *res.rects[i];
    const int d = res.donors[i];
    ASSERT_NE(d, i);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool inside = y >= r.top && y < r.top + r.height && x >= r.left &&
                            x < r.left + r.width;
        const auto& src = inside ? pairs[d] : pairs[i];
        const auto& srcm = inside ? pseudo[d] : pseudo[i];
        for (int c = 0; c < 3; ++c) {
          ASSERT_EQ(res.pairs[i].a.at(c, y, x), src.a.at(c, y, x));
          ASSERT_EQ(res.pairs[i].b.at(c, y, x), src.b.at(c, y, x));
        }
        ASSERT_EQ(res.pseudo_labels[i].at(y, x), srcm.at(y, x));
      }
  }
}

TEST(Augment, CutmixBatchValidatesInputs) {
  auto pair = make_pair(16, 16, 300, false);
  std::vector<ImagePair> pairs = {pair, pair};
  std::vector<Tensor<std::uint8_t>> pseudo = {
      Tensor<std::uint8_t>({16, 16}, std::uint8_t{0})};
  CutmixParams p;
  auto rng = sscd::StreamKey(103).rng();
  EXPECT_THROW(sscd::cutmix_batch(pairs, pseudo, p, rng), std::invalid_argument);

  pseudo.push_back(Tensor<std::uint8_t>({16, 16}, std::uint8_t{0}));
  auto mismatched = pairs;
  mismatched[1].a = Tensor<float>({3, 16, 17});
  mismatched[1].b = Tensor<float>({3, 16, 17});
  EXPECT_THROW(sscd::cutmix_batch(mismatched, pseudo, p, rng),
               std::invalid_argument);
}

TEST(Augment, RectMaskAndPasteRect) {
  sscd::CutmixRect r{1, 2, 2, 3};
  auto m = sscd::rect_mask(r, 4, 6);
  std::int64_t ones = 0;
  for (std::int64_t i = 0; i < m.numel(); ++i) ones += m[i];
  EXPECT_EQ(ones, 6);
  EXPECT_EQ(m.at(1, 2), 1);
  EXPECT_EQ(m.at(2, 4), 1);
  EXPECT_EQ(m.at(0, 2), 0);
  EXPECT_EQ(m.at(3, 2), 0);

  Tensor<float> dst({2, 4, 6}, 0.0f);
  Tensor<float> src({2, 4, 6}, 1.0f);
  sscd::paste_rect(dst, src, r);
  EXPECT_EQ(dst.at(0, 1, 2), 1.0f);
  EXPECT_EQ(dst.at(1, 2, 4), 1.0f);
  EXPECT_EQ(dst.at(0, 0, 0), 0.0f);

  sscd::CutmixRect outside{3, 4, 2, 3};
  EXPECT_THROW(sscd::paste_rect(dst, src, outside), std::invalid_argument);
}

}  // namespace

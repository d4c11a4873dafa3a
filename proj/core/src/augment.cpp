#include "sscd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sscd {

namespace {

WeakTransform sample_weak_transform(int in_h, int in_w,
                                    const WeakAugmentParams& p, Rng& rng) {
  if (p.crop_h <= 0 || p.crop_w <= 0)
    throw std::invalid_argument("weak_augment: non-positive crop size");
  if (!(p.scale_lo > 0) || p.scale_hi < p.scale_lo)
    throw std::invalid_argument("weak_augment: bad scale range");
  WeakTransform t;
  const double s = uniform(rng, p.scale_lo, p.scale_hi);
  t.resized_h = std::max(1, static_cast<int>(std::lround(in_h * s)));
  t.resized_w = std::max(1, static_cast<int>(std::lround(in_w * s)));
  const int deficit_h = std::max(0, p.crop_h - t.resized_h);
  const int deficit_w = std::max(0, p.crop_w - t.resized_w);
  t.pad_top = deficit_h / 2;
  t.pad_left = deficit_w / 2;
  const int padded_h = t.resized_h + deficit_h;
  const int padded_w = t.resized_w + deficit_w;
  t.crop_top = uniform_int(rng, 0, padded_h - p.crop_h);
  t.crop_left = uniform_int(rng, 0, padded_w - p.crop_w);
  t.out_h = p.crop_h;
  t.out_w = p.crop_w;
  t.flipped = bernoulli(rng, 0.5);
  return t;
}

}  // namespace

Tensor<float> weak_transform_image(const Tensor<float>& chw,
                                   const WeakTransform& t) {
  Tensor<float> img = resize_bilinear(chw, t.resized_h, t.resized_w);
  if (t.resized_h < t.out_h || t.resized_w < t.out_w) {
    const int need_h = std::max(0, t.out_h - t.resized_h);
    const int need_w = std::max(0, t.out_w - t.resized_w);
    img = reflect_pad(img, t.pad_top, need_h - t.pad_top, t.pad_left,
                      need_w - t.pad_left);
  }
  img = crop(img, t.crop_top, t.crop_left, t.out_h, t.out_w);
  if (t.flipped) img = hflip(img);
  return img;
}

Tensor<std::uint8_t> weak_transform_mask(const Tensor<std::uint8_t>& mask,
                                         const WeakTransform& t) {
  Tensor<std::uint8_t> m = resize_nearest(mask, t.resized_h, t.resized_w);
  if (t.resized_h < t.out_h || t.resized_w < t.out_w) {
    const int need_h = std::max(0, t.out_h - t.resized_h);
    const int need_w = std::max(0, t.out_w - t.resized_w);
    m = reflect_pad(m, t.pad_top, need_h - t.pad_top, t.pad_left,
                    need_w - t.pad_left);
  }
  m = crop(m, t.crop_top, t.crop_left, t.out_h, t.out_w);
  if (t.flipped) m = hflip(m);
  return m;
}

WeakAugmented weak_augment(const ImagePair& pair, const WeakAugmentParams& p,
                           Rng& rng) {
  if (pair.a.dim() != 3 || !pair.a.same_shape(pair.b))
    throw std::invalid_argument("weak_augment: pair images must share (3,H,W)");
  WeakAugmented out;
  out.transform = sample_weak_transform(pair.a.shape(1), pair.a.shape(2), p, rng);
  out.pair.a = weak_transform_image(pair.a, out.transform);
  out.pair.b = weak_transform_image(pair.b, out.transform);
  if (pair.label) {
    if (pair.label->shape(0) != pair.a.shape(1) ||
        pair.label->shape(1) != pair.a.shape(2))
      throw std::invalid_argument("weak_augment: label shape mismatch");
    out.pair.label = weak_transform_mask(*pair.label, out.transform);
  }
  out.pair.id = pair.id;
  return out;
}

namespace {

Tensor<float> strong_one(const Tensor<float>& img, const StrongAugmentParams& p,
                         Rng& rng) {
  Tensor<float> out = img;
  if (bernoulli(rng, p.jitter_prob)) {
    // Factor draws happen in a fixed order so streams replay identically.
    const double fb = uniform(rng, p.jitter_lo, p.jitter_hi);
    const double fc = uniform(rng, p.jitter_lo, p.jitter_hi);
    const double fs = uniform(rng, p.jitter_lo, p.jitter_hi);
    out = adjust_brightness(out, fb);
    out = adjust_contrast(out, fc);
    out = adjust_saturation(out, fs);
  }
  if (bernoulli(rng, p.blur_prob)) {
    const double sigma = uniform(rng, p.blur_sigma_lo, p.blur_sigma_hi);
    out = gaussian_blur(out, sigma);
  }
  return clamp01(std::move(out));
}

}  // namespace

ImagePair strong_augment(const ImagePair& pair, const StrongAugmentParams& p,
                         Rng& rng) {
  ImagePair out;
  out.a = strong_one(pair.a, p, rng);
  out.b = strong_one(pair.b, p, rng);
  out.label = pair.label;
  out.id = pair.id;
  return out;
}

Tensor<std::uint8_t> rect_mask(const CutmixRect& r, int h, int w) {
  Tensor<std::uint8_t> m({h, w}, std::uint8_t{0});
  for (int y = r.top; y < r.top + r.height; ++y)
    for (int x = r.left; x < r.left + r.width; ++x) m.at(y, x) = 1;
  return m;
}

CutmixDraw cutmix_sample_rects(int batch, int h, int w, const CutmixParams& p,
                               Rng& rng) {
  CutmixDraw draw;
  draw.rects.assign(batch, std::nullopt);
  draw.donors.assign(batch, -1);
  if (batch < 2) return draw;

  // Donor permutation with self-maps swapped away; donors read the
  // original (unmixed) batch.
  std::vector<int> perm(batch);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < batch; ++i)
    if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % batch]);

  for (int i = 0; i < batch; ++i) {
    if (!bernoulli(rng, p.prob)) continue;
    const double u = uniform(rng, p.area_lo, p.area_hi);
    const double aspect = uniform(rng, 1.0 / std::sqrt(2.0), std::sqrt(2.0));
    CutmixRect r;
    r.height = std::clamp(
        static_cast<int>(std::lround(h * std::sqrt(u * aspect))), 1, h);
    r.width = std::clamp(
        static_cast<int>(std::lround(w * std::sqrt(u / aspect))), 1, w);
    r.top = uniform_int(rng, 0, h - r.height);
    r.left = uniform_int(rng, 0, w - r.width);
    draw.rects[i] = r;
    draw.donors[i] = perm[i];
  }
  return draw;
}

CutmixResult cutmix_batch(const std::vector<ImagePair>& pairs,
                          const std::vector<Tensor<std::uint8_t>>& pseudo_labels,
                          const CutmixParams& p, Rng& rng) {
  if (pairs.size() != pseudo_labels.size())
    throw std::invalid_argument("cutmix_batch: pair/label count mismatch");
  const int n = static_cast<int>(pairs.size());
  for (int i = 1; i < n; ++i)
    if (!pairs[i].a.same_shape(pairs[0].a))
      throw std::invalid_argument("cutmix_batch: mixed image sizes in batch");

  CutmixResult res;
  res.pairs = pairs;
  res.pseudo_labels = pseudo_labels;
  if (n == 0) return res;
  const int h = pairs[0].a.shape(1), w = pairs[0].a.shape(2);
  CutmixDraw draw = cutmix_sample_rects(n, h, w, p, rng);
  for (int i = 0; i < n; ++i) {
    if (!draw.rects[i]) continue;
    const int d = draw.donors[i];
    paste_rect(res.pairs[i].a, pairs[d].a, *draw.rects[i]);
    paste_rect(res.pairs[i].b, pairs[d].b, *draw.rects[i]);
    paste_rect(res.pseudo_labels[i], pseudo_labels[d], *draw.rects[i]);
  }
  res.rects = std::move(draw.rects);
  res.donors = std::move(draw.donors);
  return res;
}

}  // namespace sscd

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sscd/image.hpp"
#include "sscd/rng.hpp"

namespace sscd {

// Co-registered temporal pair with an optional change mask.
struct ImagePair {
  Tensor<float> a;
  Tensor<float> b;
  std::optional<Tensor<std::uint8_t>> label;
  std::string id;
};

struct WeakAugmentParams {
  double scale_lo = 0.5;
  double scale_hi = 2.0;
  int crop_h = 64;
  int crop_w = 64;
};

struct StrongAugmentParams {
  double jitter_lo = 0.6;
  double jitter_hi = 1.4;
  double jitter_prob = 0.8;
  double blur_sigma_lo = 0.1;
  double blur_sigma_hi = 2.0;
  double blur_prob = 0.5;
};

struct CutmixParams {
  double prob = 0.5;
  double area_lo = 0.1;
  double area_hi = 0.5;
};

// The sampled geometry of one weak augmentation, recorded so tests can map
// source coordinates through the identical transform.
struct WeakTransform {
  int resized_h = 0;
  int resized_w = 0;
  int pad_top = 0;
  int pad_left = 0;
  int crop_top = 0;
  int crop_left = 0;
  int out_h = 0;
  int out_w = 0;
  bool flipped = false;
};

struct WeakAugmented {
  ImagePair pair;
  WeakTransform transform;
};

// Shared geometric pipeline: scale jitter, reflect-pad when the crop would
// not fit, random crop, random horizontal flip. The same transform hits
// image_a, image_b, and the label (nearest-neighbor for the mask).
WeakAugmented weak_augment(const ImagePair& pair, const WeakAugmentParams& p,
                           Rng& rng);

// Applies a previously sampled weak transform to a mask. weak_augment uses
// this internally for the label channel.
Tensor<std::uint8_t> weak_transform_mask(const Tensor<std::uint8_t>& mask,
                                         const WeakTransform& t);
Tensor<float> weak_transform_image(const Tensor<float>& chw,
                                   const WeakTransform& t);

// Photometric-only pass, sampled independently for the two temporal images;
// geometry and label untouched.
ImagePair strong_augment(const ImagePair& pair, const StrongAugmentParams& p,
                         Rng& rng);

struct CutmixRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

// Sampled mixing decisions for one batch; rect and donor are unset where no
// mix applies. Donors index the original batch and never self-reference.
struct CutmixDraw {
  std::vector<std::optional<CutmixRect>> rects;
  std::vector<int> donors;  // -1 where no mix was applied
};

CutmixDraw cutmix_sample_rects(int batch, int h, int w, const CutmixParams& p,
                               Rng& rng);

struct CutmixResult {
  std::vector<ImagePair> pairs;
  std::vector<Tensor<std::uint8_t>> pseudo_labels;
  std::vector<std::optional<CutmixRect>> rects;
  std::vector<int> donors;
};

// Per-sample rectangular paste from a batch donor (never self), applied to
// both temporal images and the pseudo-label with the identical rectangle.
CutmixResult cutmix_batch(const std::vector<ImagePair>& pairs,
                          const std::vector<Tensor<std::uint8_t>>& pseudo_labels,
                          const CutmixParams& p, Rng& rng);

Tensor<std::uint8_t> rect_mask(const CutmixRect& r, int h, int w);

// Copies the rectangle from src into dst; works on (C,H,W) and (H,W) alike.
template <class T>
void paste_rect(Tensor<T>& dst, const Tensor<T>& src, const CutmixRect& r) {
  check_same_shape(dst, src, "paste_rect");
  const int h = dst.shape(dst.dim() - 2), w = dst.shape(dst.dim() - 1);
  const int channels = dst.dim() == 2 ? 1 : dst.shape(0);
  if (r.top < 0 || r.left < 0 || r.top + r.height > h || r.left + r.width > w)
    throw std::invalid_argument("paste_rect: rectangle outside image");
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* d = dst.data() + c * plane;
    const T* s = src.data() + c * plane;
    for (int y = r.top; y < r.top + r.height; ++y)
      for (int x = r.left; x < r.left + r.width; ++x)
        d[static_cast<std::int64_t>(y) * w + x] =
            s[static_cast<std::int64_t>(y) * w + x];
  }
}

}  // namespace sscd

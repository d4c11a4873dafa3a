#pragma once

#include <cstdint>
#include <stdexcept>

#include "sscd/tensor.hpp"

namespace sscd {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  std::int64_t total() const { return tp + tn + fp + fn; }
};

inline ConfusionCounts count_confusion(const Tensor<std::uint8_t>& pred,
                                       const Tensor<std::uint8_t>& truth) {
  check_same_shape(pred, truth, "count_confusion");
  ConfusionCounts c;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    if (p && t)
      ++c.tp;
    else if (p && !t)
      ++c.fp;
    else if (!p && t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

// IoU of the change class. An empty union (no predicted and no true change)
// counts as perfect agreement.
inline double iou_from_counts(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double overall_accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) return 1.0;
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

inline double binary_iou(const Tensor<std::uint8_t>& pred,
                         const Tensor<std::uint8_t>& truth) {
  return iou_from_counts(count_confusion(pred, truth));
}

struct EvalMetrics {
  double iou = 0.0;
  double oa = 0.0;
  ConfusionCounts counts;

  static EvalMetrics from_counts(const ConfusionCounts& c) {
    return {iou_from_counts(c), overall_accuracy(c), c};
  }
};

// Per-pixel agreement raster, interleaved RGB rows: true positives white,
// true negatives black, false positives red, false negatives green.
inline Tensor<std::uint8_t> render_error_map(const Tensor<std::uint8_t>& pred,
                                             const Tensor<std::uint8_t>& truth) {
  check_same_shape(pred, truth, "render_error_map");
  if (pred.dim() != 2)
    throw std::invalid_argument("render_error_map: expected (H,W) masks");
  const int h = pred.shape(0), w = pred.shape(1);
  Tensor<std::uint8_t> rgb({h, w, 3}, std::uint8_t{0});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool p = pred.at(y, x) != 0, t = truth.at(y, x) != 0;
      std::uint8_t r = 0, g = 0, b = 0;
      if (p && t) {
        r = g = b = 255;
      } else if (p && !t) {
        r = 255;
      } else if (!p && t) {
        g = 255;
      }
      rgb.at(y, x, 0) = r;
      rgb.at(y, x, 1) = g;
      rgb.at(y, x, 2) = b;
    }
  }
  return rgb;
}

// Hard prediction from a change-probability map at threshold 0.5.
template <class T>
Tensor<std::uint8_t> threshold_probability(const Tensor<T>& prob,
                                           double thr = 0.5) {
  Tensor<std::uint8_t> mask(prob.shape());
  for (std::int64_t i = 0; i < prob.numel(); ++i)
    mask[i] = static_cast<double>(prob[i]) > thr ? 1 : 0;
  return mask;
}

}  // namespace sscd

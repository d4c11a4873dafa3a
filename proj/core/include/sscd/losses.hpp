#pragma once

#include <optional>

#include "sscd/autograd.hpp"

namespace sscd {

constexpr double kDefaultTau = 0.95;
constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double lambda1 = 0.5;
  double lambda2 = 0.25;
  double lambda3 = 0.25;
};

// Scalar loss term: the tape node for backprop plus the value accumulated in
// double, so logged reports decompose exactly.
template <class T>
struct ScalarLoss {
  ag::Var<T> node;
  double value = 0.0;
};

template <class T>
ScalarLoss<T> zero_loss() {
  return {ag::constant(Tensor<T>({1}, T{0})), 0.0};
}

// Mean pixel cross-entropy of 2-class logits against a {0,1} mask. Target
// probabilities are floored at 1e-12 before the log; floored pixels carry no
// gradient. `valid`, when given, restricts the mean to mask-1 pixels.
template <class T>
ScalarLoss<T> cross_entropy(const ag::Var<T>& logits,
                            const Tensor<std::uint8_t>& target,
                            const Tensor<std::uint8_t>* valid = nullptr) {
  const auto& s = logits->value.shape();
  if (s.size() != 4 || s[1] != 2)
    throw std::invalid_argument("cross_entropy: logits must be (N,2,H,W)");
  const int n = s[0], h = s[2], w = s[3];
  if (target.dim() != 3 || target.shape(0) != n || target.shape(1) != h ||
      target.shape(2) != w)
    throw std::invalid_argument("cross_entropy: target shape mismatch, logits " +
                                logits->value.shape_str() + " target " +
                                target.shape_str());
  if (valid) check_same_shape(target, *valid, "cross_entropy valid mask");

  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::int64_t count = 0;
  if (valid) {
    for (std::int64_t i = 0; i < valid->numel(); ++i) count += (*valid)[i] ? 1 : 0;
  } else {
    count = static_cast<std::int64_t>(n) * plane;
  }
  if (count == 0) return zero_loss<T>();

  double acc = 0.0;
  for (int b = 0; b < n; ++b) {
    const T* z0 = logits->value.data() + (static_cast<std::int64_t>(b) * 2) * plane;
    const T* z1 = z0 + plane;
    const std::uint8_t* t = target.data() + b * plane;
    const std::uint8_t* vm = valid ? valid->data() + b * plane : nullptr;
    for (std::int64_t i = 0; i < plane; ++i) {
      if (vm && !vm[i]) continue;
      const double m = std::max<double>(z0[i], z1[i]);
      const double lse = m + std::log(std::exp(z0[i] - m) + std::exp(z1[i] - m));
      const double logp_t = (t[i] ? z1[i] : z0[i]) - lse;
      acc += logp_t >= std::log(kProbFloor) ? -logp_t : -std::log(kProbFloor);
    }
  }
  const double value = acc / static_cast<double>(count);

  Tensor<T> out({1});
  out[0] = static_cast<T>(value);
  auto target_p = std::make_shared<Tensor<std::uint8_t>>(target);
  auto valid_p = valid ? std::make_shared<Tensor<std::uint8_t>>(*valid) : nullptr;
  auto node = ag::make_op<T>(
      std::move(out), {logits},
      [logits, target_p, valid_p, n, plane, count](ag::Node<T>& node) {
        auto& gx = logits->ensure_grad();
        const double scale = node.grad[0] / static_cast<double>(count);
        for (int b = 0; b < n; ++b) {
          const std::int64_t base = static_cast<std::int64_t>(b) * 2 * plane;
          const T* z0 = logits->value.data() + base;
          const T* z1 = z0 + plane;
          T* g0 = gx.data() + base;
          T* g1 = g0 + plane;
          const std::uint8_t* t = target_p->data() + b * plane;
          const std::uint8_t* vm = valid_p ? valid_p->data() + b * plane : nullptr;
          for (std::int64_t i = 0; i < plane; ++i) {
            if (vm && !vm[i]) continue;
            const double m = std::max<double>(z0[i], z1[i]);
            const double e0 = std::exp(z0[i] - m), e1 = std::exp(z1[i] - m);
            const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
            const double pt = t[i] ? p1 : p0;
            if (pt < kProbFloor) continue;  // clamped pixel, flat region
            g0[i] += static_cast<T>(scale * (p0 - (t[i] ? 0.0 : 1.0)));
            g1[i] += static_cast<T>(scale * (p1 - (t[i] ? 1.0 : 0.0)));
          }
        }
      });
  return {node, value};
}

// KL(P || softmax(q_logits)) with P a frozen per-pixel distribution over the
// two classes, mean over pixels. Used by the intermediate-VAT power step.
template <class T>
ScalarLoss<T> kl_to_frozen(const Tensor<T>& p_probs, const ag::Var<T>& q_logits) {
  const auto& s = q_logits->value.shape();
  check_same_shape(p_probs, q_logits->value, "kl_to_frozen");
  const int n = s[0], h = s[2], w = s[3];
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t count = static_cast<std::int64_t>(n) * plane;

  double acc = 0.0;
  for (int b = 0; b < n; ++b) {
    const std::int64_t base = static_cast<std::int64_t>(b) * 2 * plane;
    const T* q0 = q_logits->value.data() + base;
    const T* q1 = q0 + plane;
    const T* p0 = p_probs.data() + base;
    const T* p1 = p0 + plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double m = std::max<double>(q0[i], q1[i]);
      const double lse = m + std::log(std::exp(q0[i] - m) + std::exp(q1[i] - m));
      const double lq0 = q0[i] - lse, lq1 = q1[i] - lse;
      const double a0 = p0[i], a1 = p1[i];
      if (a0 > 0) acc += a0 * (std::log(a0) - lq0);
      if (a1 > 0) acc += a1 * (std::log(a1) - lq1);
    }
  }
  const double value = acc / static_cast<double>(count);

  Tensor<T> out({1});
  out[0] = static_cast<T>(value);
  auto pp = std::make_shared<Tensor<T>>(p_probs);
  auto node = ag::make_op<T>(
      std::move(out), {q_logits}, [q_logits, pp, n, plane, count](ag::Node<T>& node) {
        auto& gx = q_logits->ensure_grad();
        const double scale = node.grad[0] / static_cast<double>(count);
        for (int b = 0; b < n; ++b) {
          const std::int64_t base = static_cast<std::int64_t>(b) * 2 * plane;
          const T* q0 = q_logits->value.data() + base;
          const T* q1 = q0 + plane;
          const T* p0 = pp->data() + base;
          const T* p1 = p0 + plane;
          T* g0 = gx.data() + base;
          T* g1 = g0 + plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const double m = std::max<double>(q0[i], q1[i]);
            const double e0 = std::exp(q0[i] - m), e1 = std::exp(q1[i] - m);
            const double s0 = e0 / (e0 + e1), s1 = e1 / (e0 + e1);
            g0[i] += static_cast<T>(scale * (s0 - p0[i]));
            g1[i] += static_cast<T>(scale * (s1 - p1[i]));
          }
        }
      });
  return {node, value};
}

// Hard thresholding of the weak-view change probability: 1 iff p > tau.
template <class T>
Tensor<std::uint8_t> make_pseudo_label(const Tensor<T>& prob,
                                       double tau = kDefaultTau) {
  Tensor<std::uint8_t> mask(prob.shape());
  for (std::int64_t i = 0; i < prob.numel(); ++i)
    mask[i] = static_cast<double>(prob[i]) > tau ? 1 : 0;
  return mask;
}

template <class T>
struct PseudoLabelMask {
  Tensor<std::uint8_t> mask;
  Tensor<T> confidence;

  static PseudoLabelMask from_probability(const Tensor<T>& prob,
                                          double tau = kDefaultTau) {
    return {make_pseudo_label(prob, tau), prob};
  }
};

template <class T>
ScalarLoss<T> supervised_loss(const ag::Var<T>& logits,
                              const Tensor<std::uint8_t>& ground_truth) {
  return cross_entropy(logits, ground_truth);
}

// L_ui: mean of the two strong-view cross-entropies against the weak-view
// pseudo-label (each strong view carries its own CutMix-mixed copy).
template <class T>
ScalarLoss<T> image_consistency_loss(const ScalarLoss<T>& ce_strong1,
                                     const ScalarLoss<T>& ce_strong2) {
  auto node = ag::weighted_sum<T>({ce_strong1.node, ce_strong2.node}, {0.5, 0.5});
  return {node, 0.5 * (ce_strong1.value + ce_strong2.value)};
}

// L_uf: mean over the K auxiliary branches; K = 0 disables the term.
template <class T>
ScalarLoss<T> feature_consistency_loss(const std::vector<ScalarLoss<T>>& branches) {
  if (branches.empty()) return zero_loss<T>();
  std::vector<ag::Var<T>> nodes;
  std::vector<double> weights;
  double value = 0.0;
  const double inv_k = 1.0 / static_cast<double>(branches.size());
  for (const auto& b : branches) {
    nodes.push_back(b.node);
    weights.push_back(inv_k);
    value += inv_k * b.value;
  }
  return {ag::weighted_sum<T>(nodes, weights), value};
}

template <class T>
ScalarLoss<T> total_loss(const ScalarLoss<T>& l_s, const ScalarLoss<T>& l_ui,
                         const ScalarLoss<T>& l_uf, const LossWeights& w) {
  if (w.lambda1 < 0 || w.lambda2 < 0 || w.lambda3 < 0)
    throw std::invalid_argument("total_loss: negative weights rejected");
  auto node = ag::weighted_sum<T>({l_s.node, l_ui.node, l_uf.node},
                                  {w.lambda1, w.lambda2, w.lambda3});
  const double value =
      w.lambda1 * l_s.value + w.lambda2 * l_ui.value + w.lambda3 * l_uf.value;
  return {node, value};
}

struct LossReport {
  double l_s = 0.0;
  double l_ui = 0.0;
  double l_uf = 0.0;
  double total = 0.0;
  std::vector<double> l_uf_branches;
  double perturb_fraction = 0.0;
};

}  // namespace sscd

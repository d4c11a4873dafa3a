#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sscd/autograd.hpp"
#include "sscd/losses.hpp"
#include "sscd/metrics.hpp"
#include "sscd/rng.hpp"

namespace sscd {

enum class PerturbKind {
  feature_noise,
  feature_dropout,
  object_masking,
  context_masking,
  guided_cutout,
  intermediate_vat,
  random_dropout,
};

inline const char* kind_name(PerturbKind k) {
  switch (k) {
    case PerturbKind::feature_noise: return "feature_noise";
    case PerturbKind::feature_dropout: return "feature_dropout";
    case PerturbKind::object_masking: return "object_masking";
    case PerturbKind::context_masking: return "context_masking";
    case PerturbKind::guided_cutout: return "guided_cutout";
    case PerturbKind::intermediate_vat: return "intermediate_vat";
    case PerturbKind::random_dropout: return "random_dropout";
  }
  return "?";
}

inline PerturbKind kind_from_name(const std::string& s) {
  for (PerturbKind k :
       {PerturbKind::feature_noise, PerturbKind::feature_dropout,
        PerturbKind::object_masking, PerturbKind::context_masking,
        PerturbKind::guided_cutout, PerturbKind::intermediate_vat,
        PerturbKind::random_dropout}) {
    if (s == kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown perturbation kind: " + s);
}

struct PerturbationSpec {
  PerturbKind kind;
  std::map<std::string, double> params;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

// One branch per kind, in the catalog order above.
inline std::vector<PerturbationSpec> default_perturbation_specs() {
  return {
      {PerturbKind::feature_noise, {{"amplitude", 0.3}}},
      {PerturbKind::feature_dropout, {{"quantile_lo", 0.6}, {"quantile_hi", 0.9}}},
      {PerturbKind::object_masking, {}},
      {PerturbKind::context_masking, {}},
      {PerturbKind::guided_cutout, {{"area_lo", 0.1}, {"area_hi", 0.4}}},
      {PerturbKind::intermediate_vat, {{"epsilon", 2.0}, {"xi", 1e-6}}},
      {PerturbKind::random_dropout, {{"rate", 0.5}}},
  };
}

inline void validate_specs(const std::vector<PerturbationSpec>& specs) {
  for (const auto& s : specs) {
    switch (s.kind) {
      case PerturbKind::feature_noise:
        if (!(s.param("amplitude", 0.3) > 0))
          throw std::invalid_argument("feature_noise: amplitude must be > 0");
        break;
      case PerturbKind::random_dropout: {
        const double r = s.param("rate", 0.5);
        if (!(r > 0 && r < 1))
          throw std::invalid_argument("random_dropout: rate must be in (0,1)");
        break;
      }
      case PerturbKind::feature_dropout: {
        const double lo = s.param("quantile_lo", 0.6);
        const double hi = s.param("quantile_hi", 0.9);
        if (!(lo > 0 && hi < 1 && lo <= hi))
          throw std::invalid_argument("feature_dropout: bad quantile range");
        break;
      }
      case PerturbKind::guided_cutout: {
        const double lo = s.param("area_lo", 0.1);
        const double hi = s.param("area_hi", 0.4);
        if (!(lo > 0 && hi < 1 && lo <= hi))
          throw std::invalid_argument("guided_cutout: bad area range");
        break;
      }
      case PerturbKind::intermediate_vat:
        if (!(s.param("epsilon", 2.0) >= 0) || !(s.param("xi", 1e-6) > 0))
          throw std::invalid_argument("intermediate_vat: bad epsilon/xi");
        break;
      default:
        break;
    }
  }
}

// A sampled perturbation frozen into an affine map d1' = d1 .* mul + add.
// Freezing the stochastic part keeps the applied op differentiable and makes
// replays and finite-difference checks exact.
template <class T>
struct PerturbPlan {
  PerturbKind kind = PerturbKind::feature_noise;
  bool identity = false;
  std::optional<Tensor<T>> mul;
  std::optional<Tensor<T>> add;
};

template <class T>
Tensor<T> apply_plan(const Tensor<T>& d1, const PerturbPlan<T>& plan) {
  if (plan.identity) return d1;
  Tensor<T> out = d1;
  if (plan.mul) {
    check_same_shape(d1, *plan.mul, "apply_plan mul");
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= (*plan.mul)[i];
  }
  if (plan.add) {
    check_same_shape(d1, *plan.add, "apply_plan add");
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += (*plan.add)[i];
  }
  return out;
}

template <class T>
ag::Var<T> apply_plan(const ag::Var<T>& d1, const PerturbPlan<T>& plan) {
  if (plan.identity) return d1;
  ag::Var<T> out = d1;
  if (plan.mul) out = ag::mul_const(out, *plan.mul);
  if (plan.add) out = ag::add_const(out, *plan.add);
  return out;
}

// Linear-interpolation quantile of already collected values, q in [0,1].
inline double quantile_interpolated(std::vector<double> values, double q) {
  if (values.empty())
    throw std::invalid_argument("quantile_interpolated: empty input");
  if (q < 0 || q > 1)
    throw std::invalid_argument("quantile_interpolated: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// --- plan constructors; d1 samples are (C,H,W) ---

template <class T>
PerturbPlan<T> plan_feature_noise(const std::vector<int>& shape, double amplitude,
                                  Rng& rng) {
  if (!(amplitude > 0))
    throw std::invalid_argument("feature_noise: amplitude must be > 0");
  PerturbPlan<T> p;
  p.kind = PerturbKind::feature_noise;
  Tensor<T> mul(shape);
  for (std::int64_t i = 0; i < mul.numel(); ++i)
    mul[i] = static_cast<T>(1.0 + uniform(rng, -amplitude, amplitude));
  p.mul = std::move(mul);
  return p;
}

// Zeroes the spatial sites whose channel-mean magnitude exceeds a random
// quantile of that attention map; ties survive, so a flat map is untouched.
template <class T>
PerturbPlan<T> plan_feature_dropout(const Tensor<T>& d1, double quantile_lo,
                                    double quantile_hi, Rng& rng) {
  if (d1.dim() != 3)
    throw std::invalid_argument("feature_dropout: expected (C,H,W)");
  const int c = d1.shape(0), h = d1.shape(1), w = d1.shape(2);
  std::vector<double> attention(static_cast<std::size_t>(h) * w, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        attention[static_cast<std::size_t>(y) * w + x] +=
            std::abs(static_cast<double>(d1.at(ch, y, x)));
  for (auto& a : attention) a /= c;
  const double q = uniform(rng, quantile_lo, quantile_hi);
  const double thr = quantile_interpolated(attention, q);

  PerturbPlan<T> p;
  p.kind = PerturbKind::feature_dropout;
  Tensor<T> mul(d1.shape(), T{1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (attention[static_cast<std::size_t>(y) * w + x] > thr)
        for (int ch = 0; ch < c; ++ch) mul.at(ch, y, x) = T{0};
  p.mul = std::move(mul);
  return p;
}

namespace detail {

template <class T>
PerturbPlan<T> spatial_zero_plan(PerturbKind kind, const std::vector<int>& shape,
                                 const std::function<bool(int, int)>& zero_at) {
  PerturbPlan<T> p;
  p.kind = kind;
  Tensor<T> mul(shape, T{1});
  const int c = shape[0], h = shape[1], w = shape[2];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (zero_at(y, x))
        for (int ch = 0; ch < c; ++ch) mul.at(ch, y, x) = T{0};
  p.mul = std::move(mul);
  return p;
}

}  // namespace detail

template <class T>
PerturbPlan<T> plan_object_masking(const std::vector<int>& shape,
                                   const Tensor<std::uint8_t>& pseudo_d1) {
  return detail::spatial_zero_plan<T>(
      PerturbKind::object_masking, shape,
      [&](int y, int x) { return pseudo_d1.at(y, x) != 0; });
}

template <class T>
PerturbPlan<T> plan_context_masking(const std::vector<int>& shape,
                                    const Tensor<std::uint8_t>& pseudo_d1) {
  return detail::spatial_zero_plan<T>(
      PerturbKind::context_masking, shape,
      [&](int y, int x) { return pseudo_d1.at(y, x) == 0; });
}

struct BoundingBox {
  int top = 0, left = 0, height = 0, width = 0;
};

// 4-connected components of a binary mask; returns per-component boxes.
inline std::vector<BoundingBox> connected_component_boxes(
    const Tensor<std::uint8_t>& mask) {
  const int h = mask.shape(0), w = mask.shape(1);
  std::vector<int> comp(static_cast<std::size_t>(h) * w, -1);
  std::vector<BoundingBox> boxes;
  for (int sy = 0; sy < h; ++sy)
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t sidx = static_cast<std::size_t>(sy) * w + sx;
      if (!mask.at(sy, sx) || comp[sidx] >= 0) continue;
      const int id = static_cast<int>(boxes.size());
      BoundingBox box{sy, sx, 1, 1};
      int y_max = sy, x_max = sx;
      std::deque<std::pair<int, int>> queue{{sy, sx}};
      comp[sidx] = id;
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        box.top = std::min(box.top, y);
        box.left = std::min(box.left, x);
        y_max = std::max(y_max, y);
        x_max = std::max(x_max, x);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ny = y + dy[d], nx = x + dx[d];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
          if (!mask.at(ny, nx) || comp[nidx] >= 0) continue;
          comp[nidx] = id;
          queue.emplace_back(ny, nx);
        }
      }
      box.height = y_max - box.top + 1;
      box.width = x_max - box.left + 1;
      boxes.push_back(box);
    }
  return boxes;
}

// Zeroes a random rectangle inside the bounding box of a random changed
// component; with no changed pixels the rectangle lands anywhere in the map.
template <class T>
PerturbPlan<T> plan_guided_cutout(const std::vector<int>& shape,
                                  const Tensor<std::uint8_t>& pseudo_d1,
                                  double area_lo, double area_hi, Rng& rng) {
  const int h = shape[1], w = shape[2];
  BoundingBox region{0, 0, h, w};
  const auto boxes = connected_component_boxes(pseudo_d1);
  if (!boxes.empty())
    region = boxes[uniform_int(rng, 0, static_cast<int>(boxes.size()) - 1)];

  const double u = uniform(rng, area_lo, area_hi);
  const int rh = std::clamp(
      static_cast<int>(std::lround(region.height * std::sqrt(u))), 1,
      region.height);
  const int rw = std::clamp(
      static_cast<int>(std::lround(region.width * std::sqrt(u))), 1,
      region.width);
  const int top = region.top + uniform_int(rng, 0, region.height - rh);
  const int left = region.left + uniform_int(rng, 0, region.width - rw);

  return detail::spatial_zero_plan<T>(
      PerturbKind::guided_cutout, shape, [&](int y, int x) {
        return y >= top && y < top + rh && x >= left && x < left + rw;
      });
}

template <class T>
PerturbPlan<T> plan_random_dropout(const std::vector<int>& shape, double rate,
                                   Rng& rng) {
  if (!(rate > 0 && rate < 1))
    throw std::invalid_argument("random_dropout: rate must be in (0,1)");
  PerturbPlan<T> p;
  p.kind = PerturbKind::random_dropout;
  Tensor<T> mul(shape);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::int64_t i = 0; i < mul.numel(); ++i)
    mul[i] = bernoulli(rng, rate) ? T{0} : keep_scale;
  p.mul = std::move(mul);
  return p;
}

// Decodes a size-1 batch (1,C,H,W) of d1 features to logits. The callable
// must not route gradients into parameters (the engine disables their
// requires_grad for the duration of planning).
template <class T>
using VatDecodeFn = std::function<ag::Var<T>(const ag::Var<T>&)>;

// Branch- and sample-aware variant: branch k perturbs against its own
// auxiliary decoder, with the sample index selecting the companion features.
template <class T>
using VatBranchDecodeFn = std::function<ag::Var<T>(
    std::size_t branch, std::size_t sample, const ag::Var<T>&)>;

// One power-iteration step of virtual adversarial training on the d1 input:
// the plan adds epsilon times the unit direction that locally maximises
// KL(decode(d1) || decode(d1 + xi r)).
template <class T>
PerturbPlan<T> plan_intermediate_vat(const Tensor<T>& d1_sample,
                                     const VatDecodeFn<T>& decode, double epsilon,
                                     double xi, Rng& rng) {
  if (d1_sample.dim() != 3)
    throw std::invalid_argument("intermediate_vat: expected (C,H,W)");
  PerturbPlan<T> p;
  p.kind = PerturbKind::intermediate_vat;
  if (epsilon == 0) {
    p.identity = true;
    return p;
  }

  const std::vector<int> bshape{1, d1_sample.shape(0), d1_sample.shape(1),
                                d1_sample.shape(2)};
  Tensor<T> base(bshape);
  std::copy(d1_sample.data(), d1_sample.data() + d1_sample.numel(), base.data());

  Tensor<T> r(bshape);
  fill_truncated_normal(r, rng, 1.0);
  auto normalize = [](Tensor<T>& t) {
    const double n = std::sqrt(t.squared_norm());
    if (n > 0)
      for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(t[i] / n);
    return n > 0;
  };
  if (!normalize(r)) r.fill(static_cast<T>(1.0 / std::sqrt(double(r.numel()))));

  Tensor<T> target_probs;
  {
    ag::NoGradGuard ng;
    auto logits = decode(ag::constant(base));
    target_probs = Tensor<T>(logits->value.shape());
    const auto& ls = logits->value.shape();
    const std::int64_t plane =
        static_cast<std::int64_t>(ls[2]) * ls[3];
    const T* z0 = logits->value.data();
    const T* z1 = z0 + plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double m = std::max<double>(z0[i], z1[i]);
      const double e0 = std::exp(z0[i] - m), e1 = std::exp(z1[i] - m);
      target_probs[i] = static_cast<T>(e0 / (e0 + e1));
      target_probs[plane + i] = static_cast<T>(e1 / (e0 + e1));
    }
  }

  Tensor<T> probe = base;
  for (std::int64_t i = 0; i < probe.numel(); ++i)
    probe[i] += static_cast<T>(xi) * r[i];
  auto x = ag::make_leaf(probe, true);
  auto kl = kl_to_frozen(target_probs, decode(x));
  ag::backward(kl.node);

  Tensor<T> direction = x->grad;
  if (!normalize(direction)) direction = r;  // flat landscape, keep random dir

  Tensor<T> add({d1_sample.shape(0), d1_sample.shape(1), d1_sample.shape(2)});
  for (std::int64_t i = 0; i < add.numel(); ++i)
    add[i] = static_cast<T>(epsilon) * direction[i];
  p.add = std::move(add);
  return p;
}

// --- direct single-tensor forms used by unit tests and external callers ---

template <class T>
Tensor<T> feature_noise(const Tensor<T>& d1, Rng& rng, double amplitude) {
  return apply_plan(d1, plan_feature_noise<T>(d1.shape(), amplitude, rng));
}

template <class T>
Tensor<T> feature_dropout(const Tensor<T>& d1, Rng& rng, double quantile_lo = 0.6,
                          double quantile_hi = 0.9) {
  return apply_plan(d1, plan_feature_dropout(d1, quantile_lo, quantile_hi, rng));
}

template <class T>
Tensor<T> object_masking(const Tensor<T>& d1,
                         const Tensor<std::uint8_t>& pseudo_d1) {
  return apply_plan(d1, plan_object_masking<T>(d1.shape(), pseudo_d1));
}

template <class T>
Tensor<T> context_masking(const Tensor<T>& d1,
                          const Tensor<std::uint8_t>& pseudo_d1) {
  return apply_plan(d1, plan_context_masking<T>(d1.shape(), pseudo_d1));
}

template <class T>
Tensor<T> guided_cutout(const Tensor<T>& d1, const Tensor<std::uint8_t>& pseudo_d1,
                        Rng& rng, double area_lo = 0.1, double area_hi = 0.4) {
  return apply_plan(d1,
                    plan_guided_cutout<T>(d1.shape(), pseudo_d1, area_lo, area_hi, rng));
}

template <class T>
Tensor<T> random_dropout(const Tensor<T>& d1, Rng& rng, double rate) {
  return apply_plan(d1, plan_random_dropout<T>(d1.shape(), rate, rng));
}

template <class T>
Tensor<T> intermediate_vat(const Tensor<T>& d1, const VatDecodeFn<T>& decode,
                           double epsilon, double xi, Rng& rng) {
  return apply_plan(d1, plan_intermediate_vat(d1, decode, epsilon, xi, rng));
}

// --- gating ---

struct GateVerdict {
  int sample = 0;
  double iou_score = 0.0;
  bool perturb = false;
};

// Per-sample IoU between the binarized gate and main probability maps.
template <class T>
std::vector<double> gate_scores(const Tensor<T>& p_gate, const Tensor<T>& p_main,
                                double bin_threshold = 0.5) {
  check_same_shape(p_gate, p_main, "gate_scores");
  if (p_gate.dim() != 3)
    throw std::invalid_argument("gate_scores: expected (N,H,W)");
  const int n = p_gate.shape(0);
  const std::int64_t plane =
      static_cast<std::int64_t>(p_gate.shape(1)) * p_gate.shape(2);
  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i) {
    ConfusionCounts c;
    const T* g = p_gate.data() + i * plane;
    const T* m = p_main.data() + i * plane;
    for (std::int64_t j = 0; j < plane; ++j) {
      const bool pg = static_cast<double>(g[j]) > bin_threshold;
      const bool pm = static_cast<double>(m[j]) > bin_threshold;
      if (pg && pm)
        ++c.tp;
      else if (pg && !pm)
        ++c.fp;
      else if (!pg && pm)
        ++c.fn;
    }
    scores[i] = iou_from_counts(c);
  }
  return scores;
}

// Samples at or above the batch quantile of gate scores are perturbed; the
// default quantile is the median, and ties pass.
inline std::vector<GateVerdict> gate_select(const std::vector<double>& scores,
                                            double quantile = 0.5) {
  if (scores.empty()) throw std::invalid_argument("gate_select: empty batch");
  const double thr = quantile_interpolated(scores, quantile);
  std::vector<GateVerdict> verdicts(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    verdicts[i].sample = static_cast<int>(i);
    verdicts[i].iou_score = scores[i];
    verdicts[i].perturb = scores[i] >= thr;
  }
  return verdicts;
}

struct PerturbContext {
  // Pseudo-labels resampled (nearest) to the perturbed feature resolution.
  std::vector<Tensor<std::uint8_t>> pseudo_d1;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  // Distinguishes plan streams when several feature levels are perturbed.
  std::string salt = "d1";
};

// Builds the [branch][sample] plan grid. Samples whose verdict is false get
// identity plans, so every branch sees them unperturbed.
template <class T>
std::vector<std::vector<PerturbPlan<T>>> make_perturbation_plans(
    const std::vector<Tensor<T>>& d1_samples,
    const std::vector<GateVerdict>& verdicts,
    const std::vector<PerturbationSpec>& specs, const PerturbContext& ctx,
    const VatBranchDecodeFn<T>& vat_decode) {
  validate_specs(specs);
  const std::size_t n = d1_samples.size();
  if (verdicts.size() != n || ctx.pseudo_d1.size() != n)
    throw std::invalid_argument("make_perturbation_plans: batch size mismatch");
  std::vector<std::vector<PerturbPlan<T>>> plans(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    plans[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!verdicts[i].perturb) {
        plans[k][i].kind = specs[k].kind;
        plans[k][i].identity = true;
        continue;
      }
      Rng rng = StreamKey(ctx.seed)
                    .with("perturb")
                    .with(ctx.salt)
                    .with(ctx.step)
                    .with(static_cast<std::uint64_t>(k))
                    .with(static_cast<std::uint64_t>(i))
                    .rng();
      const auto& spec = specs[k];
      const auto& d1 = d1_samples[i];
      switch (spec.kind) {
        case PerturbKind::feature_noise:
          plans[k][i] =
              plan_feature_noise<T>(d1.shape(), spec.param("amplitude", 0.3), rng);
          break;
        case PerturbKind::feature_dropout:
          plans[k][i] = plan_feature_dropout(d1, spec.param("quantile_lo", 0.6),
                                             spec.param("quantile_hi", 0.9), rng);
          break;
        case PerturbKind::object_masking:
          plans[k][i] = plan_object_masking<T>(d1.shape(), ctx.pseudo_d1[i]);
          break;
        case PerturbKind::context_masking:
          plans[k][i] = plan_context_masking<T>(d1.shape(), ctx.pseudo_d1[i]);
          break;
        case PerturbKind::guided_cutout:
          plans[k][i] = plan_guided_cutout<T>(d1.shape(), ctx.pseudo_d1[i],
                                              spec.param("area_lo", 0.1),
                                              spec.param("area_hi", 0.4), rng);
          break;
        case PerturbKind::intermediate_vat: {
          VatDecodeFn<T> branch_fn = [&vat_decode, k, i](const ag::Var<T>& x) {
            return vat_decode(k, i, x);
          };
          plans[k][i] =
              plan_intermediate_vat(d1, branch_fn, spec.param("epsilon", 2.0),
                                    spec.param("xi", 1e-6), rng);
          break;
        }
        case PerturbKind::random_dropout:
          plans[k][i] =
              plan_random_dropout<T>(d1.shape(), spec.param("rate", 0.5), rng);
          break;
      }
    }
  }
  return plans;
}

// Eager convenience form returning K perturbed copies of the batch.
template <class T>
std::vector<std::vector<Tensor<T>>> apply_gated_perturbations(
    const std::vector<Tensor<T>>& d1_samples,
    const std::vector<GateVerdict>& verdicts,
    const std::vector<PerturbationSpec>& specs, const PerturbContext& ctx,
    const VatBranchDecodeFn<T>& vat_decode) {
  auto plans = make_perturbation_plans(d1_samples, verdicts, specs, ctx, vat_decode);
  std::vector<std::vector<Tensor<T>>> out(plans.size());
  for (std::size_t k = 0; k < plans.size(); ++k) {
    out[k].reserve(d1_samples.size());
    for (std::size_t i = 0; i < d1_samples.size(); ++i)
      out[k].push_back(apply_plan(d1_samples[i], plans[k][i]));
  }
  return out;
}

}  // namespace sscd

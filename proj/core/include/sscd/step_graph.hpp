#pragma once

#include <cstdint>
#include <vector>

#include "sscd/augment.hpp"
#include "sscd/config.hpp"
#include "sscd/image.hpp"
#include "sscd/losses.hpp"
#include "sscd/model.hpp"
#include "sscd/perturb.hpp"

namespace sscd {

template <class T>
Tensor<T> stack_samples(const std::vector<Tensor<T>>& samples) {
  if (samples.empty()) throw std::invalid_argument("stack_samples: empty batch");
  std::vector<int> shape;
  shape.push_back(static_cast<int>(samples.size()));
  for (int i = 0; i < samples[0].dim(); ++i) shape.push_back(samples[0].shape(i));
  Tensor<T> out(shape);
  const std::int64_t stride = samples[0].numel();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_same_shape(samples[i], samples[0], "stack_samples");
    std::copy(samples[i].data(), samples[i].data() + stride,
              out.data() + static_cast<std::int64_t>(i) * stride);
  }
  return out;
}

template <class T>
Tensor<T> slice_sample(const Tensor<T>& batch, int i) {
  if (batch.dim() < 2) throw std::invalid_argument("slice_sample: rank < 2");
  std::vector<int> shape(batch.shape().begin() + 1, batch.shape().end());
  Tensor<T> out(shape);
  const std::int64_t stride = out.numel();
  std::copy(batch.data() + static_cast<std::int64_t>(i) * stride,
            batch.data() + static_cast<std::int64_t>(i + 1) * stride, out.data());
  return out;
}

template <class T>
Tensor<T> unsqueeze0(const Tensor<T>& t) {
  std::vector<int> shape;
  shape.push_back(1);
  for (int i = 0; i < t.dim(); ++i) shape.push_back(t.shape(i));
  Tensor<T> out(shape);
  std::copy(t.data(), t.data() + t.numel(), out.data());
  return out;
}

// The raw per-step tensors after augmentation but before any model pass.
// Strong views are pre-mix; the freezing step applies the shared-rectangle
// mixing so images and pseudo-labels stay aligned.
template <class T>
struct RawStepBatch {
  Tensor<T> la, lb;
  Tensor<std::uint8_t> labels;
  Tensor<T> ua, ub;
  Tensor<T> s1a, s1b, s2a, s2b;
};

// Everything stochastic about one step, frozen: pseudo-labels, gate
// verdicts, mixing rectangles, and perturbation plans. Given these, the
// loss is a deterministic differentiable function of the parameters.
template <class T>
struct StepInputs {
  Tensor<T> la, lb;
  Tensor<std::uint8_t> labels;
  bool semi = false;
  Tensor<T> ua, ub;
  Tensor<std::uint8_t> pseudo;
  bool use_image = false;
  Tensor<T> s1a, s1b, s2a, s2b;
  Tensor<std::uint8_t> pseudo1, pseudo2;
  int branches = 0;
  std::vector<PerturbPlan<T>> plans_d1;  // per branch, batch-level
  std::vector<PerturbPlan<T>> plans_d4;
  bool gate_labeled_supervision = false;
  bool gate_pseudo_supervision = false;
  LossWeights weights;
  double perturb_fraction = 0.0;
};

namespace detail {

// Merges per-sample affine plans into one batch-level plan; identity rows
// keep multiplier one and increment zero.
template <class T>
PerturbPlan<T> combine_batch_plan(const std::vector<PerturbPlan<T>>& per_sample,
                                  const std::vector<int>& sample_shape) {
  PerturbPlan<T> out;
  out.kind = per_sample.empty() ? PerturbKind::feature_noise : per_sample[0].kind;
  bool any_mul = false, any_add = false;
  for (const auto& p : per_sample) {
    any_mul = any_mul || (!p.identity && p.mul.has_value());
    any_add = any_add || (!p.identity && p.add.has_value());
  }
  if (!any_mul && !any_add) {
    out.identity = true;
    return out;
  }
  std::vector<int> batch_shape;
  batch_shape.push_back(static_cast<int>(per_sample.size()));
  for (int d : sample_shape) batch_shape.push_back(d);
  const std::int64_t stride = Tensor<T>::numel_of(sample_shape);
  if (any_mul) {
    Tensor<T> mul(batch_shape, T{1});
    for (std::size_t i = 0; i < per_sample.size(); ++i)
      if (!per_sample[i].identity && per_sample[i].mul)
        std::copy(per_sample[i].mul->data(),
                  per_sample[i].mul->data() + stride,
                  mul.data() + static_cast<std::int64_t>(i) * stride);
    out.mul = std::move(mul);
  }
  if (any_add) {
    Tensor<T> add(batch_shape, T{0});
    for (std::size_t i = 0; i < per_sample.size(); ++i)
      if (!per_sample[i].identity && per_sample[i].add)
        std::copy(per_sample[i].add->data(),
                  per_sample[i].add->data() + stride,
                  add.data() + static_cast<std::int64_t>(i) * stride);
    out.add = std::move(add);
  }
  return out;
}

template <class T>
struct ParamFreezeGuard {
  nn::ParamStore<T>& store;
  explicit ParamFreezeGuard(nn::ParamStore<T>& s) : store(s) {
    store.set_requires_grad(false);
  }
  ~ParamFreezeGuard() { store.set_requires_grad(true); }
};

}  // namespace detail

// Runs the no-gradient half of a training step: weak-view predictions give
// pseudo-labels and gate verdicts, strong views get their mixing rectangles,
// and the per-branch perturbation plans are sampled.
template <class T>
StepInputs<T> freeze_step_inputs(ChangeDetector<T>& model,
                                 const ExperimentConfig& cfg,
                                 const RawStepBatch<T>& raw, std::int64_t step) {
  StepInputs<T> in;
  in.la = raw.la;
  in.lb = raw.lb;
  in.labels = raw.labels;
  in.weights = cfg.effective_weights();
  in.semi = cfg.variant != Variant::sup_only && raw.ua.numel() > 0;
  if (!in.semi) return in;

  in.ua = raw.ua;
  in.ub = raw.ub;
  const int n = raw.ua.shape(0);
  const int in_h = raw.ua.shape(2), in_w = raw.ua.shape(3);

  Tensor<T> prob_main, prob_gate;
  typename ChangeDetector<T>::Bundle bundle;
  {
    ag::NoGradGuard ng;
    bundle = model.difference(ag::constant(raw.ua), ag::constant(raw.ub), true);
    auto main_logits = model.decode_main(bundle, true);
    if (!main_logits->value.all_finite())
      throw std::runtime_error("freeze_step_inputs: non-finite weak logits");
    prob_main = change_probability(main_logits->value);
    if (cfg.gate_active()) {
      auto gate_logits = model.decode_gate(bundle, true);
      prob_gate = change_probability(gate_logits->value);
    }
  }
  in.pseudo = make_pseudo_label(prob_main, cfg.tau);
  in.gate_labeled_supervision =
      cfg.gate_active() && cfg.gate_supervision == "labeled";
  in.gate_pseudo_supervision =
      cfg.gate_active() && cfg.gate_supervision == "pseudo";

  std::vector<GateVerdict> verdicts;
  if (cfg.use_feature_consistency()) {
    if (cfg.gate_active()) {
      auto scores = gate_scores(prob_gate, prob_main, cfg.bin_threshold);
      verdicts = gate_select(scores, cfg.gate.quantile);
      if (cfg.gate.inverted)
        for (auto& v : verdicts) v.perturb = !v.perturb;
    } else {
      verdicts.resize(n);
      for (int i = 0; i < n; ++i) verdicts[i] = {i, 1.0, true};
    }
    int on = 0;
    for (const auto& v : verdicts) on += v.perturb ? 1 : 0;
    in.perturb_fraction = static_cast<double>(on) / n;
  }

  if (cfg.use_image_consistency()) {
    in.use_image = true;
    in.s1a = raw.s1a;
    in.s1b = raw.s1b;
    in.s2a = raw.s2a;
    in.s2b = raw.s2b;
    in.pseudo1 = in.pseudo;
    in.pseudo2 = in.pseudo;
    for (int view = 1; view <= 2; ++view) {
      Rng rng = StreamKey(cfg.seed)
                    .with("cutmix")
                    .with(static_cast<std::uint64_t>(step))
                    .with(static_cast<std::uint64_t>(view))
                    .rng();
      CutmixDraw draw = cutmix_sample_rects(n, in_h, in_w, cfg.cutmix, rng);
      Tensor<T>& va = view == 1 ? in.s1a : in.s2a;
      Tensor<T>& vb = view == 1 ? in.s1b : in.s2b;
      Tensor<std::uint8_t>& vp = view == 1 ? in.pseudo1 : in.pseudo2;
      const Tensor<T> base_a = va, base_b = vb;
      const Tensor<std::uint8_t> base_p = vp;
      for (int i = 0; i < n; ++i) {
        if (!draw.rects[i]) continue;
        const int d = draw.donors[i];
        auto dst_a = slice_sample(va, i), dst_b = slice_sample(vb, i);
        auto dst_p = slice_sample(vp, i);
        paste_rect(dst_a, slice_sample(base_a, d), *draw.rects[i]);
        paste_rect(dst_b, slice_sample(base_b, d), *draw.rects[i]);
        paste_rect(dst_p, slice_sample(base_p, d), *draw.rects[i]);
        std::copy(dst_a.data(), dst_a.data() + dst_a.numel(),
                  va.data() + static_cast<std::int64_t>(i) * dst_a.numel());
        std::copy(dst_b.data(), dst_b.data() + dst_b.numel(),
                  vb.data() + static_cast<std::int64_t>(i) * dst_b.numel());
        std::copy(dst_p.data(), dst_p.data() + dst_p.numel(),
                  vp.data() + static_cast<std::int64_t>(i) * dst_p.numel());
      }
    }
  }

  const int branches = cfg.effective_k();
  if (branches > 0) {
    in.branches = branches;
    std::vector<PerturbationSpec> specs(cfg.perturbations.begin(),
                                        cfg.perturbations.begin() + branches);

    std::vector<Tensor<T>> d1_samples, d4_samples;
    for (int i = 0; i < n; ++i) {
      d1_samples.push_back(slice_sample(bundle.d1->value, i));
      d4_samples.push_back(slice_sample(bundle.d4->value, i));
    }

    detail::ParamFreezeGuard<T> freeze(model.params());
    const bool want_d1 = cfg.fp_target != FpTarget::d4;
    const bool want_d4 = cfg.fp_target != FpTarget::d1;
    if (want_d1) {
      PerturbContext ctx;
      ctx.seed = cfg.seed;
      ctx.step = static_cast<std::uint64_t>(step);
      ctx.salt = "d1";
      const int h1 = bundle.d1->value.shape(2), w1 = bundle.d1->value.shape(3);
      for (int i = 0; i < n; ++i)
        ctx.pseudo_d1.push_back(resize_nearest(slice_sample(in.pseudo, i), h1, w1));
      VatBranchDecodeFn<T> decode = [&](std::size_t k, std::size_t i,
                                        const ag::Var<T>& x) {
        return model.decode_aux(static_cast<int>(k),
                                ag::constant(unsqueeze0(d4_samples[i])), x, in_h,
                                in_w, false);
      };
      auto plans = make_perturbation_plans(d1_samples, verdicts, specs, ctx, decode);
      std::vector<int> sshape(bundle.d1->value.shape().begin() + 1,
                              bundle.d1->value.shape().end());
      for (auto& branch : plans)
        in.plans_d1.push_back(detail::combine_batch_plan(branch, sshape));
    }
    if (want_d4) {
      PerturbContext ctx;
      ctx.seed = cfg.seed;
      ctx.step = static_cast<std::uint64_t>(step);
      ctx.salt = "d4";
      const int h4 = bundle.d4->value.shape(2), w4 = bundle.d4->value.shape(3);
      for (int i = 0; i < n; ++i)
        ctx.pseudo_d1.push_back(resize_nearest(slice_sample(in.pseudo, i), h4, w4));
      VatBranchDecodeFn<T> decode = [&](std::size_t k, std::size_t i,
                                        const ag::Var<T>& x) {
        return model.decode_aux(static_cast<int>(k), x,
                                ag::constant(unsqueeze0(d1_samples[i])), in_h,
                                in_w, false);
      };
      auto plans = make_perturbation_plans(d4_samples, verdicts, specs, ctx, decode);
      std::vector<int> sshape(bundle.d4->value.shape().begin() + 1,
                              bundle.d4->value.shape().end());
      for (auto& branch : plans)
        in.plans_d4.push_back(detail::combine_batch_plan(branch, sshape));
    }
  }
  return in;
}

template <class T>
struct StepLosses {
  ScalarLoss<T> l_s, l_ui, l_uf, total;
  std::vector<double> branch_values;
  double perturb_fraction = 0.0;

  LossReport report() const {
    LossReport r;
    r.l_s = l_s.value;
    r.l_ui = l_ui.value;
    r.l_uf = l_uf.value;
    r.total = total.value;
    r.l_uf_branches = branch_values;
    r.perturb_fraction = perturb_fraction;
    return r;
  }
};

// Builds the differentiable loss graph for one step from frozen inputs.
// Supervised term, strong-to-weak consistency term, and per-branch
// perturbed-feature consistency term combine under the configured weights.
template <class T>
StepLosses<T> build_step_loss(ChangeDetector<T>& model,
                              const ExperimentConfig& cfg,
                              const StepInputs<T>& in, bool training = true) {
  StepLosses<T> out;
  out.perturb_fraction = in.perturb_fraction;

  auto bundle_l =
      model.difference(ag::constant(in.la), ag::constant(in.lb), training);
  auto ce_main = cross_entropy(model.decode_main(bundle_l, training), in.labels);
  out.l_s = ce_main;
  if (in.gate_labeled_supervision) {
    auto ce_gate =
        cross_entropy(model.decode_gate(bundle_l, training), in.labels);
    out.l_s = {ag::weighted_sum<T>({ce_main.node, ce_gate.node}, {1.0, 1.0}),
               ce_main.value + ce_gate.value};
  }

  const bool need_bundle_u =
      in.semi && (in.branches > 0 || in.gate_pseudo_supervision);
  typename ChangeDetector<T>::Bundle bundle_u;
  if (need_bundle_u)
    bundle_u =
        model.difference(ag::constant(in.ua), ag::constant(in.ub), training);

  if (in.gate_pseudo_supervision) {
    auto ce_gate =
        cross_entropy(model.decode_gate(bundle_u, training), in.pseudo);
    out.l_s = {ag::weighted_sum<T>({out.l_s.node, ce_gate.node}, {1.0, 1.0}),
               out.l_s.value + ce_gate.value};
  }

  if (in.semi && in.use_image) {
    auto b1 = model.difference(ag::constant(in.s1a), ag::constant(in.s1b), training);
    auto b2 = model.difference(ag::constant(in.s2a), ag::constant(in.s2b), training);
    auto ce1 = cross_entropy(model.decode_main(b1, training), in.pseudo1);
    auto ce2 = cross_entropy(model.decode_main(b2, training), in.pseudo2);
    out.l_ui = image_consistency_loss(ce1, ce2);
  } else {
    out.l_ui = zero_loss<T>();
  }

  if (in.semi && in.branches > 0) {
    std::vector<ScalarLoss<T>> branch_losses;
    for (int k = 0; k < in.branches; ++k) {
      auto d1_in = bundle_u.d1;
      auto d4_in = bundle_u.d4;
      if (!in.plans_d1.empty()) d1_in = apply_plan(d1_in, in.plans_d1[k]);
      if (!in.plans_d4.empty()) d4_in = apply_plan(d4_in, in.plans_d4[k]);
      auto logits = model.decode_aux(k, d4_in, d1_in, bundle_u.in_h,
                                     bundle_u.in_w, training);
      auto ce = cross_entropy(logits, in.pseudo);
      out.branch_values.push_back(ce.value);
      branch_losses.push_back(std::move(ce));
    }
    out.l_uf = feature_consistency_loss(branch_losses);
  } else {
    out.l_uf = zero_loss<T>();
  }

  out.total = total_loss(out.l_s, out.l_ui, out.l_uf, in.weights);
  return out;
}

}  // namespace sscd

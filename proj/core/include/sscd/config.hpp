#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sscd/augment.hpp"
#include "sscd/losses.hpp"
#include "sscd/model.hpp"
#include "sscd/perturb.hpp"

namespace sscd {

enum class Variant { sup_only, feature, image, feature_image, gtpc };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& s);

enum class FpTarget { d1, d4, d1_and_d4 };

const char* fp_target_name(FpTarget t);
FpTarget fp_target_from_name(const std::string& s);

struct OptimizerConfig {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::string lr_schedule = "none";  // "none" or "poly"
  double poly_power = 0.9;
};

struct GateConfig {
  bool enabled = true;
  double quantile = 0.5;
  bool inverted = false;
};

struct ExperimentConfig {
  Variant variant = Variant::gtpc;
  BackboneKind backbone = BackboneKind::tiny;
  FpTarget fp_target = FpTarget::d1;
  GateConfig gate;
  // "labeled": gate decoder learns from ground truth on labeled batches.
  // "pseudo": it learns from the main decoder's pseudo-labels instead.
  std::string gate_supervision = "labeled";
  OptimizerConfig optimizer;
  LossWeights loss_weights;
  double tau = kDefaultTau;
  int k = 7;
  int epochs = 80;
  int batch_labeled = 4;
  int batch_unlabeled = 4;
  int patch_size = 256;
  int crop_size = 64;
  double bin_threshold = 0.5;
  std::uint64_t seed = 0;
  bool deterministic = true;
  WeakAugmentParams weak;
  StrongAugmentParams strong;
  CutmixParams cutmix;
  std::vector<PerturbationSpec> perturbations = default_perturbation_specs();

  bool use_image_consistency() const {
    return variant == Variant::image || variant == Variant::feature_image ||
           variant == Variant::gtpc;
  }
  bool use_feature_consistency() const {
    return variant == Variant::feature || variant == Variant::feature_image ||
           variant == Variant::gtpc;
  }
  bool gate_active() const {
    return use_feature_consistency() && gate.enabled;
  }
  // The ablation arms differ only in which loss terms run; disabled terms
  // get zero weight and the supervised-only arm reduces to plain training.
  LossWeights effective_weights() const {
    LossWeights w = loss_weights;
    if (variant == Variant::sup_only) return {1.0, 0.0, 0.0};
    if (!use_image_consistency()) w.lambda2 = 0.0;
    if (!use_feature_consistency()) w.lambda3 = 0.0;
    return w;
  }
  int effective_k() const { return use_feature_consistency() ? k : 0; }

  // Aligns dependent switches with the variant: only the fully gated arm
  // keeps the gate on.
  void resolve_variant();
  void validate() const;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  void save(const std::string& path) const;
  static ExperimentConfig load(const std::string& path);
};

}  // namespace sscd

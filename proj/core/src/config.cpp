#include "sscd/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace sscd {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::sup_only: return "sup_only";
    case Variant::feature: return "feature";
    case Variant::image: return "image";
    case Variant::feature_image: return "feature_image";
    case Variant::gtpc: return "gtpc";
  }
  return "?";
}

Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::sup_only, Variant::feature, Variant::image,
                    Variant::feature_image, Variant::gtpc})
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant: " + s);
}

const char* fp_target_name(FpTarget t) {
  switch (t) {
    case FpTarget::d1: return "d1";
    case FpTarget::d4: return "d4";
    case FpTarget::d1_and_d4: return "d1_and_d4";
  }
  return "?";
}

FpTarget fp_target_from_name(const std::string& s) {
  for (FpTarget t : {FpTarget::d1, FpTarget::d4, FpTarget::d1_and_d4})
    if (s == fp_target_name(t)) return t;
  throw std::invalid_argument("unknown fp_target: " + s);
}

void ExperimentConfig::resolve_variant() {
  gate.enabled = variant == Variant::gtpc;
}

void ExperimentConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("config: epochs must be > 0");
  if (batch_labeled <= 0 || batch_unlabeled <= 0)
    throw std::invalid_argument("config: batch sizes must be > 0");
  if (!(tau > 0 && tau < 1))
    throw std::invalid_argument("config: tau must be in (0,1)");
  if (k < 0) throw std::invalid_argument("config: k must be >= 0");
  if (use_feature_consistency() && k == 0)
    throw std::invalid_argument("config: feature consistency needs k > 0");
  if (!(optimizer.lr > 0)) throw std::invalid_argument("config: lr must be > 0");
  if (optimizer.momentum < 0 || optimizer.momentum >= 1)
    throw std::invalid_argument("config: momentum must be in [0,1)");
  if (optimizer.weight_decay < 0)
    throw std::invalid_argument("config: weight_decay must be >= 0");
  if (optimizer.lr_schedule != "none" && optimizer.lr_schedule != "poly")
    throw std::invalid_argument("config: lr_schedule must be none or poly");
  if (loss_weights.lambda1 < 0 || loss_weights.lambda2 < 0 ||
      loss_weights.lambda3 < 0)
    throw std::invalid_argument("config: loss weights must be >= 0");
  if (gate.quantile < 0 || gate.quantile > 1)
    throw std::invalid_argument("config: gate quantile must be in [0,1]");
  if (gate_supervision != "labeled" && gate_supervision != "pseudo")
    throw std::invalid_argument("config: gate_supervision must be labeled or pseudo");
  if (!(bin_threshold > 0 && bin_threshold < 1))
    throw std::invalid_argument("config: bin_threshold must be in (0,1)");
  const BackboneConfig bc{backbone};
  if (crop_size <= 0 || crop_size % bc.stride_s4() != 0)
    throw std::invalid_argument("config: crop_size must be a positive multiple of " +
                                std::to_string(bc.stride_s4()));
  if (patch_size <= 0 || patch_size % bc.stride_s4() != 0)
    throw std::invalid_argument("config: patch_size must be a positive multiple of " +
                                std::to_string(bc.stride_s4()));
  if (!(weak.scale_lo > 0) || weak.scale_hi < weak.scale_lo)
    throw std::invalid_argument("config: bad weak scale range");
  if (use_feature_consistency() &&
      static_cast<int>(perturbations.size()) < k)
    throw std::invalid_argument("config: fewer perturbation specs than k");
  validate_specs(perturbations);
}

namespace {

void expect_keys(const json& j, const std::string& path,
                 const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + path + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + path + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["variant"] = variant_name(variant);
  j["backbone"] = backbone == BackboneKind::tiny ? "tiny" : "resnet50";
  j["fp_target"] = fp_target_name(fp_target);
  j["gate"] = {{"enabled", gate.enabled},
               {"quantile", gate.quantile},
               {"inverted", gate.inverted}};
  j["gate_supervision"] = gate_supervision;
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"momentum", optimizer.momentum},
                    {"weight_decay", optimizer.weight_decay},
                    {"lr_schedule", optimizer.lr_schedule},
                    {"poly_power", optimizer.poly_power}};
  j["loss_weights"] = {{"lambda1", loss_weights.lambda1},
                       {"lambda2", loss_weights.lambda2},
                       {"lambda3", loss_weights.lambda3}};
  j["tau"] = tau;
  j["k"] = k;
  j["epochs"] = epochs;
  j["batch_labeled"] = batch_labeled;
  j["batch_unlabeled"] = batch_unlabeled;
  j["patch_size"] = patch_size;
  j["crop_size"] = crop_size;
  j["bin_threshold"] = bin_threshold;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["augment"] = {
      {"weak", {{"scale_lo", weak.scale_lo}, {"scale_hi", weak.scale_hi}}},
      {"strong",
       {{"jitter_lo", strong.jitter_lo},
        {"jitter_hi", strong.jitter_hi},
        {"jitter_prob", strong.jitter_prob},
        {"blur_sigma_lo", strong.blur_sigma_lo},
        {"blur_sigma_hi", strong.blur_sigma_hi},
        {"blur_prob", strong.blur_prob}}},
      {"cutmix",
       {{"prob", cutmix.prob},
        {"area_lo", cutmix.area_lo},
        {"area_hi", cutmix.area_hi}}}};
  json specs = json::array();
  for (const auto& s : perturbations)
    specs.push_back({{"kind", kind_name(s.kind)}, {"params", s.params}});
  j["perturbations"] = specs;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  expect_keys(j, "", {"variant", "backbone", "fp_target", "gate",
                      "gate_supervision", "optimizer", "loss_weights", "tau", "k",
                      "epochs", "batch_labeled", "batch_unlabeled", "patch_size",
                      "crop_size", "bin_threshold", "seed", "deterministic",
                      "augment", "perturbations"});
  ExperimentConfig c;
  if (j.contains("variant"))
    c.variant = variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("backbone")) {
    const auto s = j.at("backbone").get<std::string>();
    if (s == "tiny")
      c.backbone = BackboneKind::tiny;
    else if (s == "resnet50")
      c.backbone = BackboneKind::resnet50;
    else
      throw std::invalid_argument("config: unknown backbone " + s);
  }
  if (j.contains("fp_target"))
    c.fp_target = fp_target_from_name(j.at("fp_target").get<std::string>());
  if (j.contains("gate")) {
    const auto& g = j.at("gate");
    expect_keys(g, "gate.", {"enabled", "quantile", "inverted"});
    read(g, "enabled", c.gate.enabled);
    read(g, "quantile", c.gate.quantile);
    read(g, "inverted", c.gate.inverted);
  }
  read(j, "gate_supervision", c.gate_supervision);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    expect_keys(o, "optimizer.",
                {"lr", "momentum", "weight_decay", "lr_schedule", "poly_power"});
    read(o, "lr", c.optimizer.lr);
    read(o, "momentum", c.optimizer.momentum);
    read(o, "weight_decay", c.optimizer.weight_decay);
    read(o, "lr_schedule", c.optimizer.lr_schedule);
    read(o, "poly_power", c.optimizer.poly_power);
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    expect_keys(w, "loss_weights.", {"lambda1", "lambda2", "lambda3"});
    read(w, "lambda1", c.loss_weights.lambda1);
    read(w, "lambda2", c.loss_weights.lambda2);
    read(w, "lambda3", c.loss_weights.lambda3);
  }
  read(j, "tau", c.tau);
  read(j, "k", c.k);
  read(j, "epochs", c.epochs);
  read(j, "batch_labeled", c.batch_labeled);
  read(j, "batch_unlabeled", c.batch_unlabeled);
  read(j, "patch_size", c.patch_size);
  read(j, "crop_size", c.crop_size);
  read(j, "bin_threshold", c.bin_threshold);
  read(j, "seed", c.seed);
  read(j, "deterministic", c.deterministic);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    expect_keys(a, "augment.", {"weak", "strong", "cutmix"});
    if (a.contains("weak")) {
      const auto& w = a.at("weak");
      expect_keys(w, "augment.weak.", {"scale_lo", "scale_hi"});
      read(w, "scale_lo", c.weak.scale_lo);
      read(w, "scale_hi", c.weak.scale_hi);
    }
    if (a.contains("strong")) {
      const auto& s = a.at("strong");
      expect_keys(s, "augment.strong.",
                  {"jitter_lo", "jitter_hi", "jitter_prob", "blur_sigma_lo",
                   "blur_sigma_hi", "blur_prob"});
      read(s, "jitter_lo", c.strong.jitter_lo);
      read(s, "jitter_hi", c.strong.jitter_hi);
      read(s, "jitter_prob", c.strong.jitter_prob);
      read(s, "blur_sigma_lo", c.strong.blur_sigma_lo);
      read(s, "blur_sigma_hi", c.strong.blur_sigma_hi);
      read(s, "blur_prob", c.strong.blur_prob);
    }
    if (a.contains("cutmix")) {
      const auto& m = a.at("cutmix");
      expect_keys(m, "augment.cutmix.", {"prob", "area_lo", "area_hi"});
      read(m, "prob", c.cutmix.prob);
      read(m, "area_lo", c.cutmix.area_lo);
      read(m, "area_hi", c.cutmix.area_hi);
    }
  }
  if (j.contains("perturbations")) {
    c.perturbations.clear();
    for (const auto& e : j.at("perturbations")) {
      expect_keys(e, "perturbations[].", {"kind", "params"});
      PerturbationSpec spec;
      spec.kind = kind_from_name(e.at("kind").get<std::string>());
      if (e.contains("params"))
        spec.params = e.at("params").get<std::map<std::string, double>>();
      c.perturbations.push_back(std::move(spec));
    }
  }
  // The weak crop always matches the training crop size.
  c.weak.crop_h = c.crop_size;
  c.weak.crop_w = c.crop_size;
  return c;
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  f << to_json();
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

}  // namespace sscd

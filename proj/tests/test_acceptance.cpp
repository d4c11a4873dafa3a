// Acceptance harness: one test per release criterion, in order, each printing
// a single pass/fail line. Criterion 8 is advisory; it prints an
// investigation note instead of failing the build.
#include <gtest/gtest.h>

#include <unistd.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sscd/config.hpp"
#include "sscd/data.hpp"
#include "sscd/engine.hpp"
#include "sscd/losses.hpp"
#include "sscd/metrics.hpp"
#include "sscd/model.hpp"
#include "sscd/perturb.hpp"
#include "sscd/rng.hpp"
#include "sscd/step_graph.hpp"

namespace sscd {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, const std::string& what, bool pass,
            const std::string& detail = "") {
  std::cout << "[criterion " << criterion << "] " << what << ": "
            << (pass ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
}

std::string fmt(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("sscd_accept_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---- criteria 7 and 8 share these training runs ----

struct OrderingSetting {
  Dataset data;
  SplitManifest manifest;
};

const OrderingSetting& ordering_setting() {
  static const OrderingSetting* setting = [] {
    auto* s = new OrderingSetting;
    SynthParams p;
    p.count = 500;
    p.size = 64;
    s->data = synth_generate(p, 2024);
    std::vector<std::string> ids;
    ids.reserve(s->data.samples.size());
    for (const auto& sample : s->data.samples) ids.push_back(sample.id);
    s->manifest = make_split(ids, 0.05, 7, 0.1, 0.1);
    return s;
  }();
  return *setting;
}

constexpr int kOrderingStepsPerEpoch = 16;

double ordering_run(Variant variant, std::uint64_t seed, double gate_quantile) {
  const OrderingSetting& s = ordering_setting();
  ExperimentConfig cfg;
  cfg.variant = variant;
  cfg.backbone = BackboneKind::tiny;
  cfg.epochs = 40;
  cfg.crop_size = 64;
  cfg.patch_size = 64;
  cfg.seed = seed;
  cfg.gate.quantile = gate_quantile;
  cfg.optimizer.lr_schedule = "poly";
  cfg.resolve_variant();
  cfg.validate();
  Trainer trainer(cfg);
  trainer.set_steps_per_epoch_override(kOrderingStepsPerEpoch);
  TrainResult result = trainer.train(s.data, s.manifest);
  return 100.0 * result.test.iou;  // IoU points
}

// Memoized per (variant, gate quantile): three seeds' test IoU in points.
std::array<double, 3> ordering_runs(Variant variant, double gate_quantile) {
  static auto* memo =
      new std::map<std::pair<std::string, double>, std::array<double, 3>>;
  const auto key = std::make_pair(std::string(variant_name(variant)), gate_quantile);
  auto it = memo->find(key);
  if (it != memo->end()) return it->second;
  std::array<double, 3> out{};
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    out[seed] = ordering_run(variant, seed, gate_quantile);
  (*memo)[key] = out;
  return out;
}

double mean3(const std::array<double, 3>& v) { return (v[0] + v[1] + v[2]) / 3.0; }

}  // namespace

TEST(Acceptance, C01MetricsMatchBruteForceConfusion) {
  const auto t0 = Clock::now();
  const int h = 16, w = 16;
  const double densities[] = {0.0, 0.1, 0.5, 0.9, 1.0};
  std::int64_t count_mismatches = 0, value_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng = StreamKey(1).with("c1").with(static_cast<std::uint64_t>(trial)).rng();
    Tensor<std::uint8_t> pred({h, w}), truth({h, w});
    const double dp = densities[trial % 5];
    const double dt = densities[(trial / 5) % 5];
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
      pred[i] = bernoulli(rng, dp) ? 1 : 0;
      truth[i] = bernoulli(rng, dt) ? 1 : 0;
    }

    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool p = pred.at(y, x) != 0, t = truth.at(y, x) != 0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
        tn += !p && !t;
      }
    }
    const double iou_ref =
        tp + fp + fn == 0 ? 1.0
                          : static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    const double oa_ref =
        static_cast<double>(tp + tn) / static_cast<double>(tp + tn + fp + fn);

    const ConfusionCounts c = count_confusion(pred, truth);
    if (c.tp != tp || c.tn != tn || c.fp != fp || c.fn != fn) ++count_mismatches;
    if (iou_from_counts(c) != iou_ref || overall_accuracy(c) != oa_ref)
      ++value_mismatches;
  }
  EXPECT_EQ(count_mismatches, 0);
  EXPECT_EQ(value_mismatches, 0);
  const double elapsed = seconds_since(t0);
  EXPECT_LT(elapsed, 5.0);
  report(1, "metrics agree exactly with brute-force confusion", !HasFailure(),
         "1000 pairs, " + fmt(elapsed) + " s, limit 5 s");
}

TEST(Acceptance, C02TotalLossGradientMatchesFiniteDifferences) {
  const auto t0 = Clock::now();
  BackboneConfig bc;
  bc.kind = BackboneKind::tiny;
  bc.init_seed = 3;
  ChangeDetector<double> model(bc, 2);

  ExperimentConfig cfg;
  cfg.variant = Variant::gtpc;
  cfg.backbone = BackboneKind::tiny;
  cfg.k = 2;
  const auto catalog = default_perturbation_specs();
  cfg.perturbations = {catalog[0], catalog[5]};  // noise and adversarial add
  cfg.crop_size = 32;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.seed = 9;
  cfg.resolve_variant();
  cfg.validate();

  const int n = 2, h = 32, w = 32;
  Rng rng = StreamKey(123).with("c2").rng();
  auto image = [&] {
    Tensor<double> t({n, 3, h, w});
    fill_uniform(t, rng, 0.0, 1.0);
    return t;
  };
  auto jitter = [](const Tensor<double>& t, double gain, double bias) {
    Tensor<double> out = t;
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out[i] = std::clamp(gain * out[i] + bias, 0.0, 1.0);
    return out;
  };
  RawStepBatch<double> raw;
  raw.la = image();
  raw.lb = image();
  raw.labels = Tensor<std::uint8_t>({n, h, w});
  for (std::int64_t i = 0; i < raw.labels.numel(); ++i)
    raw.labels[i] = bernoulli(rng, 0.3) ? 1 : 0;
  raw.ua = image();
  raw.ub = image();
  raw.s1a = jitter(raw.ua, 0.9, 0.02);
  raw.s1b = jitter(raw.ub, 1.1, -0.02);
  raw.s2a = jitter(raw.ua, 1.05, 0.01);
  raw.s2b = jitter(raw.ub, 0.95, 0.03);

  StepInputs<double> in = freeze_step_inputs(model, cfg, raw, 5);
  ASSERT_TRUE(in.semi);
  ASSERT_TRUE(in.use_image);
  ASSERT_EQ(in.branches, 2);

  auto loss_value = [&] { return build_step_loss(model, cfg, in, true).total.value; };

  model.params().zero_grad();
  StepLosses<double> losses = build_step_loss(model, cfg, in, true);
  ag::backward(losses.total.node);

  std::vector<std::pair<std::string, ag::Var<double>>> entries(
      model.params().params().begin(), model.params().params().end());
  std::int64_t total_numel = 0;
  for (const auto& [name, var] : entries) total_numel += var->value.numel();

  Rng pick = StreamKey(123).with("c2pick").rng();
  std::set<std::pair<std::string, std::int64_t>> seen;
  const int target_coords = 120;
  int checked = 0, skipped = 0, failures = 0;
  double worst_rel = 0.0;
  std::string notes;
  while (checked < target_coords) {
    std::int64_t flat = uniform_int(pick, 0, static_cast<int>(total_numel - 1));
    std::size_t e = 0;
    while (flat >= entries[e].second->value.numel()) {
      flat -= entries[e].second->value.numel();
      ++e;
    }
    if (!seen.insert({entries[e].first, flat}).second) continue;

    auto& node = *entries[e].second;
    const double analytic = node.grad.empty() ? 0.0 : node.grad[flat];
    const double saved = node.value[flat];
    auto fd_at = [&](double step_h) {
      node.value[flat] = saved + step_h;
      const double f_plus = loss_value();
      node.value[flat] = saved - step_h;
      const double f_minus = loss_value();
      node.value[flat] = saved;
      return (f_plus - f_minus) / (2.0 * step_h);
    };
    auto rel_error = [&](double fd) {
      const double diff = std::abs(analytic - fd);
      if (diff <= 1e-9) return 0.0;  // both effectively zero
      return diff / std::max(std::abs(analytic), std::abs(fd));
    };
    const double fd5 = fd_at(1e-5), fd6 = fd_at(1e-6);
    // Central differences need a smooth loss at probe scale; when the two
    // step sizes disagree a relu/abs kink sits inside the interval, so the
    // estimate is void and the coordinate is resampled. A backward bug would
    // instead be self-consistent across steps and still counted below.
    const double fd_gap =
        std::abs(fd5 - fd6) / std::max({std::abs(fd5), std::abs(fd6), 1e-8});
    if (std::abs(fd5 - fd6) > 1e-8 && fd_gap > 0.05 && skipped < 12) {
      ++skipped;
      continue;
    }
    ++checked;
    const double rel = std::min(rel_error(fd5), rel_error(fd6));
    worst_rel = std::max(worst_rel, rel);
    if (rel >= 1e-3) {
      ++failures;
      notes += entries[e].first + "[" + std::to_string(flat) + "] analytic " +
               std::to_string(analytic) + " fd " + std::to_string(fd5) + "/" +
               std::to_string(fd6) + "; ";
    }
  }
  EXPECT_GE(checked, 100);
  EXPECT_EQ(failures, 0) << notes;
  const double elapsed = seconds_since(t0);
  EXPECT_LT(elapsed, 120.0);
  report(2, "analytic gradients match central differences", !HasFailure(),
         std::to_string(checked) + " coordinates (" + std::to_string(skipped) +
             " kink resamples), worst rel err " + fmt(worst_rel, 6) + ", " +
             fmt(elapsed) + " s, limit 120 s");
}

TEST(Acceptance, C03GateSelectsMedianSplitExactly) {
  int bad_distinct = 0, bad_ties = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Rng rng = StreamKey(5).with("c3").with(static_cast<std::uint64_t>(trial)).rng();
    std::vector<double> scores(4);
    do {
      for (auto& s : scores) s = uniform(rng, 0.0, 1.0);
    } while (std::set<double>(scores.begin(), scores.end()).size() != 4);
    int on = 0;
    for (const auto& v : gate_select(scores)) on += v.perturb ? 1 : 0;
    if (on != 2) ++bad_distinct;

    const double tie = uniform(rng, 0.0, 1.0);
    int on_tie = 0;
    for (const auto& v : gate_select({tie, tie, tie, tie}))
      on_tie += v.perturb ? 1 : 0;
    if (on_tie != 4) ++bad_ties;
  }
  EXPECT_EQ(bad_distinct, 0);
  EXPECT_EQ(bad_ties, 0);
  report(3, "median gate marks exactly half, ties all pass", !HasFailure(),
         "500 batches");
}

TEST(Acceptance, C04PseudoLabelThresholdBoundary) {
  const Tensor<double> probs({4}, {0.94, 0.95, 0.9500001, 1.0});
  const Tensor<std::uint8_t> mask = make_pseudo_label(probs);
  const std::uint8_t expected[] = {0, 0, 1, 1};
  bool ok = true;
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(mask[i], expected[i]) << "probability " << probs[i];
    ok = ok && mask[i] == expected[i];
  }
  report(4, "pseudo-label threshold is strictly greater than tau", ok,
         "grid {0.94, 0.95, 0.9500001, 1.0} -> {0, 0, 1, 1}");
}

TEST(Acceptance, C05LoggedLossesDecomposeUnderFixedWeights) {
  SynthParams p;
  p.count = 30;
  p.size = 32;
  Dataset data = synth_generate(p, 77);
  std::vector<std::string> ids;
  for (const auto& s : data.samples) ids.push_back(s.id);
  SplitManifest manifest = make_split(ids, 0.2, 3, 0.1, 0.1);

  ExperimentConfig cfg;
  cfg.variant = Variant::gtpc;
  cfg.backbone = BackboneKind::tiny;
  cfg.k = 2;
  cfg.epochs = 5;
  cfg.crop_size = 32;
  cfg.patch_size = 32;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.seed = 13;
  cfg.resolve_variant();
  cfg.validate();
  Trainer trainer(cfg);
  trainer.set_steps_per_epoch_override(3);
  TrainResult result = trainer.train(data, manifest);

  ASSERT_EQ(result.history.steps.size(), 15u);
  double worst = 0.0;
  for (const auto& step : result.history.steps) {
    const auto& r = step.report;
    const double composed = 0.5 * r.l_s + 0.25 * r.l_ui + 0.25 * r.l_uf;
    worst = std::max(worst, std::abs(r.total - composed));
  }
  EXPECT_LT(worst, 1e-9);
  report(5, "every logged step satisfies total = 0.5*l_s + 0.25*l_ui + 0.25*l_uf",
         !HasFailure(), "15 steps, worst residual " + fmt(worst, 12));
}

TEST(Acceptance, C06PerturbationOperatorSuite) {
  const auto t0 = Clock::now();
  const int c = 6, h = 12, w = 14;
  Rng rng = StreamKey(31).with("c6").rng();
  Tensor<float> d1({c, h, w});
  fill_uniform(d1, rng, -1.0, 1.0);
  Tensor<std::uint8_t> pseudo({h, w}, std::uint8_t{0});
  for (int y = 3; y < 7; ++y)
    for (int x = 2; x < 9; ++x) pseudo.at(y, x) = 1;

  VatDecodeFn<float> decode_f;
  VatDecodeFn<double> decode_d;
  Tensor<float> vw({2, c, 1, 1});
  fill_uniform(vw, rng, -0.5, 0.5);
  decode_f = [&vw](const ag::Var<float>& x) {
    return ag::conv2d(x, ag::constant(vw), ag::Var<float>{}, ag::ConvGeom{1, 0, 1});
  };
  const Tensor<double> vw_d = vw.cast<double>();
  decode_d = [&vw_d](const ag::Var<double>& x) {
    return ag::conv2d(x, ag::constant(vw_d), ag::Var<double>{}, ag::ConvGeom{1, 0, 1});
  };

  // Shape and finiteness across the whole catalog.
  std::map<std::string, Tensor<float>> outputs;
  outputs["feature_noise"] = feature_noise(d1, rng, 0.3);
  outputs["feature_dropout"] = feature_dropout(d1, rng);
  outputs["object_masking"] = object_masking(d1, pseudo);
  outputs["context_masking"] = context_masking(d1, pseudo);
  outputs["guided_cutout"] = guided_cutout(d1, pseudo, rng);
  outputs["intermediate_vat"] = intermediate_vat(d1, decode_f, 2.0, 1e-6, rng);
  outputs["random_dropout"] = random_dropout(d1, rng, 0.5);
  EXPECT_EQ(outputs.size(), 7u);
  for (const auto& [name, out] : outputs) {
    EXPECT_TRUE(out.same_shape(d1)) << name;
    EXPECT_TRUE(out.all_finite()) << name;
  }

  // Identity limits.
  {
    const Tensor<float> near = feature_noise(d1, rng, 1e-12);
    double dev = 0.0;
    for (std::int64_t i = 0; i < d1.numel(); ++i)
      dev = std::max(dev, std::abs(static_cast<double>(near[i] - d1[i])));
    EXPECT_LT(dev, 1e-9);

    Tensor<float> flat({c, h, w}, 0.25f);
    const Tensor<float> kept = feature_dropout(flat, rng);
    for (std::int64_t i = 0; i < kept.numel(); ++i) ASSERT_EQ(kept[i], 0.25f);

    const Tensor<std::uint8_t> none({h, w}, std::uint8_t{0});
    const Tensor<std::uint8_t> all({h, w}, std::uint8_t{1});
    const Tensor<float> om = object_masking(d1, none);
    const Tensor<float> cm = context_masking(d1, all);
    for (std::int64_t i = 0; i < d1.numel(); ++i) {
      ASSERT_EQ(om[i], d1[i]);
      ASSERT_EQ(cm[i], d1[i]);
    }

    const Tensor<float> vat0 = intermediate_vat(d1, decode_f, 0.0, 1e-6, rng);
    for (std::int64_t i = 0; i < d1.numel(); ++i) ASSERT_EQ(vat0[i], d1[i]);
  }

  // Guided cutout only ever zeroes, and zeroes at least one site.
  {
    Tensor<float> nonzero = d1;
    for (std::int64_t i = 0; i < nonzero.numel(); ++i)
      if (nonzero[i] == 0.0f) nonzero[i] = 0.5f;
    const Tensor<float> cut = guided_cutout(nonzero, pseudo, rng);
    std::int64_t zeroed = 0, altered = 0;
    for (std::int64_t i = 0; i < cut.numel(); ++i) {
      if (cut[i] == 0.0f && nonzero[i] != 0.0f)
        ++zeroed;
      else if (cut[i] != nonzero[i])
        ++altered;
    }
    EXPECT_GT(zeroed, 0);
    EXPECT_EQ(altered, 0);
  }

  // Adversarial displacement norm equals epsilon.
  {
    Rng vrng = StreamKey(31).with("c6vat").rng();
    const Tensor<double> base = d1.cast<double>();
    const Tensor<double> moved = intermediate_vat(base, decode_d, 2.0, 1e-6, vrng);
    double sq = 0.0;
    for (std::int64_t i = 0; i < base.numel(); ++i) {
      const double d = moved[i] - base[i];
      sq += d * d;
    }
    EXPECT_NEAR(std::sqrt(sq), 2.0, 1e-6);
  }

  // Dropout zero mass within 3 sigma of the binomial expectation.
  {
    const double rate = 0.5;
    const std::int64_t per_draw = d1.numel();
    std::int64_t zeros = 0;
    for (int draw = 0; draw < 100; ++draw) {
      Rng drng = StreamKey(31).with("c6drop").with(static_cast<std::uint64_t>(draw)).rng();
      const Tensor<float> out = random_dropout(d1, drng, rate);
      for (std::int64_t i = 0; i < out.numel(); ++i) zeros += out[i] == 0.0f;
    }
    const double trials = 100.0 * static_cast<double>(per_draw);
    const double mu = trials * rate;
    const double sigma = std::sqrt(trials * rate * (1.0 - rate));
    EXPECT_NEAR(static_cast<double>(zeros), mu, 3.0 * sigma);
  }

  const double elapsed = seconds_since(t0);
  EXPECT_LT(elapsed, 60.0);
  report(6, "all seven perturbation operators behave", !HasFailure(),
         fmt(elapsed) + " s, limit 60 s");
}

TEST(Acceptance, C07VariantOrderingOnSyntheticData) {
  const auto t0 = Clock::now();
  const auto sup = ordering_runs(Variant::sup_only, 0.5);
  const auto feature = ordering_runs(Variant::feature, 0.5);
  const auto image = ordering_runs(Variant::image, 0.5);
  const auto full = ordering_runs(Variant::gtpc, 0.5);
  const double elapsed = seconds_since(t0);

  const double m_sup = mean3(sup), m_feature = mean3(feature);
  const double m_image = mean3(image), m_full = mean3(full);
  EXPECT_GE(m_full, m_sup + 5.0);
  EXPECT_GE(m_full, std::max(m_feature, m_image) - 1.0);
  EXPECT_LT(elapsed, 2700.0);
  report(7, "gated training beats supervised-only and keeps pace with both arms",
         !HasFailure(),
         "mean test IoU: full " + fmt(m_full) + ", sup_only " + fmt(m_sup) +
             ", feature " + fmt(m_feature) + ", image " + fmt(m_image) + ", " +
             fmt(elapsed / 60.0) + " min, limit 45 min");
}

TEST(Acceptance, C08GateQuantileSensitivityIsAdvisory) {
  const auto lo = ordering_runs(Variant::gtpc, 0.25);
  const auto mid = ordering_runs(Variant::gtpc, 0.5);
  const auto hi = ordering_runs(Variant::gtpc, 0.75);
  const double m_lo = mean3(lo), m_mid = mean3(mid), m_hi = mean3(hi);
  const bool pass = m_mid >= m_lo - 1.0 && m_mid >= m_hi - 1.0;
  std::cout << "[criterion 8] median gate quantile stays competitive: "
            << (pass ? "PASS" : "SOFT FAIL") << " (mean test IoU: q=0.25 "
            << fmt(m_lo) << ", q=0.5 " << fmt(m_mid) << ", q=0.75 " << fmt(m_hi)
            << ")" << std::endl;
  if (!pass) {
    std::cout << "[criterion 8] investigation note: the median quantile "
                 "trailed an extreme quantile by more than 1 IoU point at "
                 "desk scale. This ordering is only expected to stabilize at "
                 "full scale; check per-seed spread and the perturb-fraction "
                 "trace before changing the default."
              << std::endl;
    for (int s = 0; s < 3; ++s)
      std::cout << "[criterion 8]   seed " << s << ": q=0.25 " << fmt(lo[s])
                << ", q=0.5 " << fmt(mid[s]) << ", q=0.75 " << fmt(hi[s])
                << std::endl;
  }
  SUCCEED();
}

TEST(Acceptance, C09TrainingHistoryIsBitReproducible) {
  SynthParams p;
  p.count = 16;
  p.size = 32;
  Dataset data = synth_generate(p, 55);
  std::vector<std::string> ids;
  for (const auto& s : data.samples) ids.push_back(s.id);
  SplitManifest manifest = make_split(ids, 0.25, 2, 0.125, 0.125);

  ExperimentConfig cfg;
  cfg.variant = Variant::gtpc;
  cfg.backbone = BackboneKind::tiny;
  cfg.k = 2;
  cfg.epochs = 2;
  cfg.crop_size = 32;
  cfg.patch_size = 32;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.seed = 41;
  cfg.resolve_variant();
  cfg.validate();

  TempDir dir_a("c9a"), dir_b("c9b");
  for (const auto* dir : {&dir_a, &dir_b}) {
    Trainer trainer(cfg);
    trainer.set_steps_per_epoch_override(2);
    trainer.train(data, manifest, dir->str());
  }
  const std::string bytes_a = read_file_bytes(dir_a.str("history.jsonl"));
  const std::string bytes_b = read_file_bytes(dir_b.str("history.jsonl"));
  EXPECT_FALSE(bytes_a.empty());
  EXPECT_EQ(bytes_a, bytes_b);
  report(9, "identical config and seed reproduce the history file bit-exactly",
         !HasFailure(), std::to_string(bytes_a.size()) + " bytes");
}

TEST(Acceptance, C10MixedRectanglesStayAlignedWithDonors) {
  const int n = 5, c = 3, h = 20, w = 24;
  CutmixParams params;
  params.prob = 0.8;
  std::int64_t mismatches = 0, mixed = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng = StreamKey(17).with("c10").with(static_cast<std::uint64_t>(trial)).rng();
    std::vector<ImagePair> pairs(n);
    std::vector<Tensor<std::uint8_t>> pseudo(n);
    for (int i = 0; i < n; ++i) {
      pairs[i].id = "p" + std::to_string(i);
      pairs[i].a = Tensor<float>({c, h, w});
      pairs[i].b = Tensor<float>({c, h, w});
      fill_uniform(pairs[i].a, rng, 0.0, 1.0);
      fill_uniform(pairs[i].b, rng, 0.0, 1.0);
      pseudo[i] = Tensor<std::uint8_t>({h, w});
      for (std::int64_t j = 0; j < pseudo[i].numel(); ++j)
        pseudo[i][j] = bernoulli(rng, 0.4) ? 1 : 0;
    }
    const CutmixResult mix = cutmix_batch(pairs, pseudo, params, rng);

    for (int i = 0; i < n; ++i) {
      const bool has_rect = mix.rects[i].has_value();
      if (!has_rect && mix.donors[i] != -1) ++mismatches;
      const int donor = has_rect ? mix.donors[i] : i;
      if (has_rect) {
        ++mixed;
        if (donor < 0 || donor >= n || donor == i) {
          ++mismatches;
          continue;
        }
      }
      const CutmixRect rect = has_rect ? *mix.rects[i] : CutmixRect{0, 0, 0, 0};
      auto inside = [&](int y, int x) {
        return y >= rect.top && y < rect.top + rect.height && x >= rect.left &&
               x < rect.left + rect.width;
      };
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int src = inside(y, x) ? donor : i;
          for (int ch = 0; ch < c; ++ch) {
            mismatches += mix.pairs[i].a.at(ch, y, x) != pairs[src].a.at(ch, y, x);
            mismatches += mix.pairs[i].b.at(ch, y, x) != pairs[src].b.at(ch, y, x);
          }
          mismatches += mix.pseudo_labels[i].at(y, x) != pseudo[src].at(y, x);
        }
      }
    }
  }
  EXPECT_GT(mixed, 0);
  EXPECT_EQ(mismatches, 0);
  report(10, "mixing pastes the same rectangle into images and pseudo-labels",
         !HasFailure(),
         "200 batches, " + std::to_string(mixed) + " mixed samples");
}

}  // namespace sscd

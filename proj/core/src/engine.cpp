#include "sscd/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sscd/step_graph.hpp"

using nlohmann::json;

namespace sscd {

SgdOptimizer::SgdOptimizer(nn::ParamStore<float>& store, OptimizerConfig cfg)
    : store_(store), cfg_(cfg) {}

void SgdOptimizer::step(double lr) {
  for (auto& [name, node] : store_.params()) {
    auto& p = node->value;
    auto it = velocity_.find(name);
    if (it == velocity_.end())
      it = velocity_.emplace(name, Tensor<float>(p.shape(), 0.0f)).first;
    auto& v = it->second;
    const bool has_grad = node->grad.numel() == p.numel();
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double g = has_grad ? node->grad[i] : 0.0;
      if (!std::isfinite(g))
        throw std::runtime_error("sgd: non-finite gradient in " + name);
      const double vel =
          cfg_.momentum * v[i] + g + cfg_.weight_decay * p[i];
      v[i] = static_cast<float>(vel);
      p[i] = static_cast<float>(p[i] - lr * vel);
    }
  }
}

namespace {

json step_line(const StepRecord& r) {
  return json{{"step", r.step},
              {"l_s", r.report.l_s},
              {"l_ui", r.report.l_ui},
              {"l_uf", r.report.l_uf},
              {"total", r.report.total},
              {"perturb_fraction", r.report.perturb_fraction}};
}

json epoch_line(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"val_iou", r.val.iou},
              {"val_oa", r.val.oa},
              {"val_tp", r.val.counts.tp},
              {"val_tn", r.val.counts.tn},
              {"val_fp", r.val.counts.fp},
              {"val_fn", r.val.counts.fn}};
}

}  // namespace

std::string TrainingHistory::to_jsonl() const {
  std::ostringstream out;
  for (const auto& s : steps) out << step_line(s).dump() << "\n";
  for (const auto& e : epochs) out << epoch_line(e).dump() << "\n";
  return out.str();
}

TrainingHistory TrainingHistory::from_jsonl(const std::string& text) {
  TrainingHistory h;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.contains("step")) {
      StepRecord r;
      r.step = j.at("step").get<std::int64_t>();
      r.report.l_s = j.at("l_s").get<double>();
      r.report.l_ui = j.at("l_ui").get<double>();
      r.report.l_uf = j.at("l_uf").get<double>();
      r.report.total = j.at("total").get<double>();
      r.report.perturb_fraction = j.at("perturb_fraction").get<double>();
      h.steps.push_back(std::move(r));
    } else {
      EpochRecord r;
      r.epoch = j.at("epoch").get<int>();
      r.val.iou = j.at("val_iou").get<double>();
      r.val.oa = j.at("val_oa").get<double>();
      r.val.counts.tp = j.at("val_tp").get<std::int64_t>();
      r.val.counts.tn = j.at("val_tn").get<std::int64_t>();
      r.val.counts.fp = j.at("val_fp").get<std::int64_t>();
      r.val.counts.fn = j.at("val_fn").get<std::int64_t>();
      h.epochs.push_back(std::move(r));
    }
  }
  return h;
}

void TrainingHistory::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("history: cannot write " + path);
  f << to_jsonl();
}

TrainingHistory TrainingHistory::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("history: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_jsonl(text);
}

namespace {

constexpr char kCheckpointMagic[9] = "SSCDCKP1";

void write_u32(std::ostream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_tensor_entry(std::ostream& f, const std::string& name,
                        const Tensor<float>& t) {
  write_u32(f, static_cast<std::uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(f, static_cast<std::uint32_t>(t.dim()));
  for (int d = 0; d < t.dim(); ++d)
    write_u32(f, static_cast<std::uint32_t>(t.shape(d)));
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

void read_tensor_entry(std::istream& f, std::string& name, Tensor<float>& t) {
  const std::uint32_t len = read_u32(f);
  name.resize(len);
  f.read(name.data(), len);
  const std::uint32_t ndim = read_u32(f);
  std::vector<int> shape(ndim);
  for (auto& d : shape) d = static_cast<int>(read_u32(f));
  t = Tensor<float>(shape);
  f.read(reinterpret_cast<char*>(t.data()),
         static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

}  // namespace

namespace {

json architecture_json(const ChangeDetector<float>& model) {
  const auto& c = model.config();
  return json{{"kind", to_string(c.kind)},
              {"init_seed", c.init_seed},
              {"tiny_widths", c.tiny_widths},
              {"tiny_decoder_width", c.tiny_decoder_width},
              {"tiny_reduce_width", c.tiny_reduce_width},
              {"rn50_decoder_width", c.rn50_decoder_width},
              {"rn50_reduce_width", c.rn50_reduce_width},
              {"aspp_rates", c.aspp_rates},
              {"aux_branches", model.aux_count()}};
}

}  // namespace

void save_checkpoint(const ChangeDetector<float>& model,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(kCheckpointMagic, 8);
  const auto& store = model.params();
  write_u32(f, static_cast<std::uint32_t>(store.params().size()));
  for (const auto& [name, node] : store.params())
    write_tensor_entry(f, name, node->value);
  write_u32(f, static_cast<std::uint32_t>(store.buffers().size()));
  for (const auto& [name, buf] : store.buffers())
    write_tensor_entry(f, name, *buf);
  const std::string arch = architecture_json(model).dump();
  write_u32(f, static_cast<std::uint32_t>(arch.size()));
  f.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(ChangeDetector<float>& model, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  auto& store = model.params();
  const std::uint32_t n_params = read_u32(f);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name;
    Tensor<float> t;
    read_tensor_entry(f, name, t);
    auto it = store.params().find(name);
    if (it == store.params().end())
      throw std::runtime_error("checkpoint: unknown parameter " + name);
    if (!it->second->value.same_shape(t))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    it->second->value = std::move(t);
  }
  const std::uint32_t n_buffers = read_u32(f);
  for (std::uint32_t i = 0; i < n_buffers; ++i) {
    std::string name;
    Tensor<float> t;
    read_tensor_entry(f, name, t);
    auto it = store.buffers().find(name);
    if (it == store.buffers().end())
      throw std::runtime_error("checkpoint: unknown buffer " + name);
    if (!it->second->same_shape(t))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    *it->second = std::move(t);
  }
  const std::uint32_t arch_len = read_u32(f);
  std::string arch(arch_len, '\0');
  f.read(arch.data(), arch_len);
  if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
  const json j = json::parse(arch);
  if (j.at("kind").get<std::string>() != to_string(model.config().kind))
    throw std::runtime_error("checkpoint: backbone kind mismatch, file has " +
                             j.at("kind").get<std::string>());
  if (j.at("aux_branches").get<int>() != model.aux_count())
    throw std::runtime_error("checkpoint: aux branch count mismatch");
}

EvalMetrics evaluate(ChangeDetector<float>& model,
                     const std::vector<const ImagePair*>& samples,
                     double bin_threshold) {
  if (samples.empty())
    throw std::invalid_argument("evaluate: empty sample set");
  ConfusionCounts total;
  for (const auto* s : samples) {
    if (!s->label)
      throw std::invalid_argument("evaluate: sample without label: " + s->id);
    auto prob = model.forward_prob(unsqueeze0(s->a), unsqueeze0(s->b));
    auto pred = threshold_probability(prob, bin_threshold);
    auto flat = pred.reshaped({pred.shape(1), pred.shape(2)});
    total += count_confusion(flat, *s->label);
  }
  return EvalMetrics::from_counts(total);
}

Trainer::Trainer(const ExperimentConfig& config)
    : cfg_([&] {
        ExperimentConfig c = config;
        c.resolve_variant();
        c.weak.crop_h = c.crop_size;
        c.weak.crop_w = c.crop_size;
        c.validate();
        return c;
      }()),
      model_(
          [&] {
            BackboneConfig bc;
            bc.kind = cfg_.backbone;
            bc.init_seed = cfg_.seed;
            return bc;
          }(),
          cfg_.k),
      opt_(model_.params(), cfg_.optimizer) {}

int Trainer::steps_per_epoch(std::int64_t n_labeled,
                             std::int64_t n_unlabeled) const {
  if (steps_override_ > 0) return steps_override_;
  if (cfg_.variant == Variant::sup_only || n_unlabeled == 0)
    return static_cast<int>((n_labeled + cfg_.batch_labeled - 1) /
                            cfg_.batch_labeled);
  return static_cast<int>((n_unlabeled + cfg_.batch_unlabeled - 1) /
                          cfg_.batch_unlabeled);
}

double Trainer::lr_at(std::int64_t step, std::int64_t total_steps) const {
  if (cfg_.optimizer.lr_schedule == "poly" && total_steps > 0) {
    const double frac = 1.0 - static_cast<double>(step) / total_steps;
    return cfg_.optimizer.lr * std::pow(std::max(frac, 0.0), cfg_.optimizer.poly_power);
  }
  return cfg_.optimizer.lr;
}

namespace {

Tensor<float> stack_pairs(const std::vector<ImagePair>& batch, bool first) {
  std::vector<Tensor<float>> imgs;
  imgs.reserve(batch.size());
  for (const auto& p : batch) imgs.push_back(first ? p.a : p.b);
  return stack_samples(imgs);
}

Tensor<std::uint8_t> stack_labels(const std::vector<ImagePair>& batch) {
  std::vector<Tensor<std::uint8_t>> masks;
  masks.reserve(batch.size());
  for (const auto& p : batch) {
    if (!p.label)
      throw std::invalid_argument("train_step: labeled sample missing label");
    masks.push_back(*p.label);
  }
  return stack_samples(masks);
}

}  // namespace

LossReport Trainer::train_step(const std::vector<ImagePair>& labeled,
                               const std::vector<ImagePair>& unlabeled,
                               std::int64_t step) {
  if (labeled.empty())
    throw std::invalid_argument("train_step: empty labeled batch");

  RawStepBatch<float> raw;
  raw.la = stack_pairs(labeled, true);
  raw.lb = stack_pairs(labeled, false);
  raw.labels = stack_labels(labeled);

  const bool semi = cfg_.variant != Variant::sup_only && !unlabeled.empty();
  if (semi) {
    raw.ua = stack_pairs(unlabeled, true);
    raw.ub = stack_pairs(unlabeled, false);
    if (cfg_.use_image_consistency()) {
      std::vector<ImagePair> s1, s2;
      for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        Rng r1 = StreamKey(cfg_.seed)
                     .with("strong1")
                     .with(static_cast<std::uint64_t>(step))
                     .with(static_cast<std::uint64_t>(i))
                     .rng();
        Rng r2 = StreamKey(cfg_.seed)
                     .with("strong2")
                     .with(static_cast<std::uint64_t>(step))
                     .with(static_cast<std::uint64_t>(i))
                     .rng();
        s1.push_back(strong_augment(unlabeled[i], cfg_.strong, r1));
        s2.push_back(strong_augment(unlabeled[i], cfg_.strong, r2));
      }
      raw.s1a = stack_pairs(s1, true);
      raw.s1b = stack_pairs(s1, false);
      raw.s2a = stack_pairs(s2, true);
      raw.s2b = stack_pairs(s2, false);
    }
  }

  auto inputs = freeze_step_inputs(model_, cfg_, raw, step);
  auto losses = build_step_loss(model_, cfg_, inputs, true);
  if (!std::isfinite(losses.total.value)) {
    std::cerr << "train_step " << step << ": non-finite loss, l_s="
              << losses.l_s.value << " l_ui=" << losses.l_ui.value
              << " l_uf=" << losses.l_uf.value << "\n";
    throw std::runtime_error("train_step: non-finite loss at step " +
                             std::to_string(step));
  }
  ag::backward(losses.total.node);
  opt_.step(lr_at(step, total_steps_));
  model_.params().zero_grad();
  return losses.report();
}

namespace {

// Cycling view over a split's ids, reshuffled per pass.
class IdLoader {
 public:
  IdLoader(std::vector<std::string> ids, std::uint64_t seed, std::string tag)
      : ids_(std::move(ids)), seed_(seed), tag_(std::move(tag)) {
    reshuffle();
  }

  const std::string& next() {
    if (cursor_ >= ids_.size()) reshuffle();
    return ids_[cursor_++];
  }

 private:
  void reshuffle() {
    Rng rng = StreamKey(seed_).with(tag_).with(pass_++).rng();
    std::shuffle(ids_.begin(), ids_.end(), rng);
    cursor_ = 0;
  }

  std::vector<std::string> ids_;
  std::uint64_t seed_;
  std::string tag_;
  std::uint64_t pass_ = 0;
  std::size_t cursor_ = 0;
};

const ImagePair& fetch(const Dataset& ds, const std::string& id) {
  const auto* s = ds.find(id);
  if (!s) throw std::runtime_error("train: manifest id not in dataset: " + id);
  return *s;
}

}  // namespace

TrainResult Trainer::train(const Dataset& dataset, const SplitManifest& manifest,
                           const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  if (manifest.labeled_ids.empty())
    throw std::invalid_argument("train: manifest has no labeled ids");

  std::vector<const ImagePair*> val_samples, test_samples;
  for (const auto& id : manifest.val_ids) val_samples.push_back(&fetch(dataset, id));
  for (const auto& id : manifest.test_ids)
    test_samples.push_back(&fetch(dataset, id));
  for (const auto& id : manifest.labeled_ids) fetch(dataset, id);
  for (const auto& id : manifest.unlabeled_ids) fetch(dataset, id);

  const bool semi = cfg_.variant != Variant::sup_only &&
                    !manifest.unlabeled_ids.empty();
  const int spe = steps_per_epoch(
      static_cast<std::int64_t>(manifest.labeled_ids.size()),
      static_cast<std::int64_t>(manifest.unlabeled_ids.size()));
  total_steps_ = static_cast<std::int64_t>(spe) * cfg_.epochs;

  IdLoader labeled_loader(manifest.labeled_ids, cfg_.seed, "order_labeled");
  IdLoader unlabeled_loader(
      semi ? manifest.unlabeled_ids : std::vector<std::string>{"_"}, cfg_.seed,
      "order_unlabeled");

  TrainResult result;
  std::map<std::string, Tensor<float>> best;
  bool have_best = false;
  std::int64_t gstep = 0;

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (int s = 0; s < spe; ++s, ++gstep) {
      std::vector<ImagePair> lb, ub;
      for (int i = 0; i < cfg_.batch_labeled; ++i) {
        const auto& sample = fetch(dataset, labeled_loader.next());
        Rng rng = StreamKey(cfg_.seed)
                      .with("weak_labeled")
                      .with(static_cast<std::uint64_t>(gstep))
                      .with(static_cast<std::uint64_t>(i))
                      .rng();
        lb.push_back(weak_augment(sample, cfg_.weak, rng).pair);
      }
      if (semi) {
        for (int i = 0; i < cfg_.batch_unlabeled; ++i) {
          const auto& sample = fetch(dataset, unlabeled_loader.next());
          Rng rng = StreamKey(cfg_.seed)
                        .with("weak_unlabeled")
                        .with(static_cast<std::uint64_t>(gstep))
                        .with(static_cast<std::uint64_t>(i))
                        .rng();
          auto aug = weak_augment(sample, cfg_.weak, rng).pair;
          aug.label.reset();  // the unlabeled stream never sees its label
          ub.push_back(std::move(aug));
        }
      }
      StepRecord rec;
      rec.step = gstep;
      rec.report = train_step(lb, ub, gstep);
      result.history.steps.push_back(std::move(rec));
    }

    if (!val_samples.empty()) {
      EpochRecord er;
      er.epoch = epoch;
      er.val = evaluate(model_, val_samples, cfg_.bin_threshold);
      if (!have_best || er.val.iou > result.best_val.iou) {
        have_best = true;
        result.best_val = er.val;
        result.best_epoch = epoch;
        best = model_.params().snapshot();
      }
      result.history.epochs.push_back(std::move(er));
    }
  }

  if (have_best) model_.params().restore(best);
  if (!test_samples.empty())
    result.test = evaluate(model_, test_samples, cfg_.bin_threshold);
  else if (have_best)
    result.test = result.best_val;

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.history.wall_seconds = result.wall_seconds;

  if (!out_dir.empty()) {
    save_checkpoint(model_, out_dir + "/checkpoint.bin");
    result.history.save(out_dir + "/history.jsonl");
  }
  return result;
}

}  // namespace sscd

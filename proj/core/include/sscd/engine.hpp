#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sscd/config.hpp"
#include "sscd/data.hpp"
#include "sscd/metrics.hpp"
#include "sscd/model.hpp"

namespace sscd {

// Classical SGD with momentum; weight decay folds into the momentum buffer.
class SgdOptimizer {
 public:
  SgdOptimizer(nn::ParamStore<float>& store, OptimizerConfig cfg);

  // v <- momentum*v + g + weight_decay*p; p <- p - lr*v
  void step(double lr);
  double base_lr() const { return cfg_.lr; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  nn::ParamStore<float>& store_;
  OptimizerConfig cfg_;
  std::map<std::string, Tensor<float>> velocity_;
};

struct StepRecord {
  std::int64_t step = 0;
  LossReport report;
};

struct EpochRecord {
  int epoch = 0;
  EvalMetrics val;
};

struct TrainingHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;  // excluded from the serialized history

  // Line-delimited records; bit-stable for a fixed run so reruns diff clean.
  std::string to_jsonl() const;
  static TrainingHistory from_jsonl(const std::string& text);
  void save(const std::string& path) const;
  static TrainingHistory load(const std::string& path);
};

void save_checkpoint(const ChangeDetector<float>& model, const std::string& path);
void load_checkpoint(ChangeDetector<float>& model, const std::string& path);

EvalMetrics evaluate(ChangeDetector<float>& model,
                     const std::vector<const ImagePair*>& samples,
                     double bin_threshold = 0.5);

struct TrainResult {
  TrainingHistory history;
  EvalMetrics best_val;
  EvalMetrics test;
  int best_epoch = -1;
  double wall_seconds = 0.0;
};

class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& config);

  // One optimizer update over a labeled and an unlabeled batch.
  LossReport train_step(const std::vector<ImagePair>& labeled,
                        const std::vector<ImagePair>& unlabeled,
                        std::int64_t step);

  // Full schedule over the manifest's splits; keeps the best-validation-IoU
  // parameters and evaluates them on the test split.
  TrainResult train(const Dataset& dataset, const SplitManifest& manifest,
                    const std::string& out_dir = "");

  ChangeDetector<float>& model() { return model_; }
  const ExperimentConfig& config() const { return cfg_; }

  // Steps per epoch: explicit override, else one pass over the driving set
  // (unlabeled for semi-supervised variants, labeled otherwise).
  int steps_per_epoch(std::int64_t n_labeled, std::int64_t n_unlabeled) const;
  void set_steps_per_epoch_override(int steps) { steps_override_ = steps; }

  double lr_at(std::int64_t step, std::int64_t total_steps) const;

 private:
  ExperimentConfig cfg_;
  ChangeDetector<float> model_;
  SgdOptimizer opt_;
  int steps_override_ = 0;
  std::int64_t total_steps_ = 0;  // set by train(); 0 keeps the lr constant
};

}  // namespace sscd

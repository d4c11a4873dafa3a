// Microbenchmarks for the hot paths: convolution, the full network forward,
// and one optimizer step of each training variant.
#include <benchmark/benchmark.h>

#include "sscd/data.hpp"
#include "sscd/engine.hpp"
#include "sscd/model.hpp"
#include "sscd/nn_ops.hpp"

namespace {

using sscd::Tensor;
namespace ag = sscd::ag;

Tensor<float> random_tensor(std::vector<int> shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  sscd::Rng rng = sscd::StreamKey(seed).rng();
  sscd::fill_uniform(t, rng, -1.0, 1.0);
  return t;
}

void bm_conv2d_forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto x = ag::constant(random_tensor({4, c, 32, 32}, 1));
  auto w = ag::make_leaf(random_tensor({c, c, 3, 3}, 2), false);
  ag::NoGradGuard ng;
  for (auto _ : state) {
    auto y = ag::conv2d(x, w, {}, ag::ConvGeom{1, 1, 1});
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(bm_conv2d_forward)->Arg(8)->Arg(16)->Arg(32);

void bm_conv2d_backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto x = ag::make_leaf(random_tensor({4, c, 32, 32}, 1), true);
  auto w = ag::make_leaf(random_tensor({c, c, 3, 3}, 2), true);
  for (auto _ : state) {
    auto y = ag::mean_all(ag::conv2d(x, w, {}, ag::ConvGeom{1, 1, 1}));
    ag::backward(y);
    x->zero_grad();
    w->zero_grad();
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(bm_conv2d_backward)->Arg(8)->Arg(16)->Arg(32);

void bm_model_forward(benchmark::State& state) {
  sscd::BackboneConfig cfg;
  cfg.init_seed = 7;
  sscd::ChangeDetector<float> model(cfg, 0);
  auto a = random_tensor({1, 3, 64, 64}, 3);
  auto b = random_tensor({1, 3, 64, 64}, 4);
  for (auto _ : state) {
    auto prob = model.forward_prob(a, b);
    benchmark::DoNotOptimize(prob.data());
  }
}
BENCHMARK(bm_model_forward);

void bm_train_step(benchmark::State& state) {
  sscd::ExperimentConfig cfg;
  cfg.variant = static_cast<sscd::Variant>(state.range(0));
  cfg.resolve_variant();
  cfg.k = 2;
  cfg.crop_size = 32;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.perturbations.resize(2);
  sscd::Trainer trainer(cfg);

  sscd::SynthParams sp;
  sp.count = 4;
  sp.size = 32;
  auto ds = sscd::synth_generate(sp, 11);
  std::vector<sscd::ImagePair> labeled{ds.samples[0], ds.samples[1]};
  std::vector<sscd::ImagePair> unlabeled{ds.samples[2], ds.samples[3]};
  for (auto& s : unlabeled) s.label.reset();

  std::int64_t step = 0;
  for (auto _ : state) {
    auto report = trainer.train_step(labeled, unlabeled, step++);
    benchmark::DoNotOptimize(report.total);
  }
}
BENCHMARK(bm_train_step)
    ->Arg(static_cast<int>(sscd::Variant::sup_only))
    ->Arg(static_cast<int>(sscd::Variant::feature_image))
    ->Arg(static_cast<int>(sscd::Variant::gtpc));

}  // namespace

BENCHMARK_MAIN();

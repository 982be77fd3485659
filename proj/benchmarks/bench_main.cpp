#include <benchmark/benchmark.h>

#include "erpgan/nn/ops.hpp"
#include "erpgan/rng.hpp"
#include "erpgan/signal.hpp"
#include "erpgan/synth.hpp"
#include "erpgan/train.hpp"

using namespace erpgan;
using nn::Tensor;

namespace {

Tensor random_tensor(nn::Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  if (grad) t.set_requires_grad(true);
  return t;
}

// Discriminator's second convolution at T=128: (N, 8, 128, 8) -> 8 features, 3x3.
void BM_Conv2dForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({n, 8, 128, 8}, 1), w = random_tensor({3, 3, 8, 8}, 2), b = random_tensor({8}, 3);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nn::ops::conv2d(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(32);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({n, 8, 128, 8}, 1, true), w = random_tensor({3, 3, 8, 8}, 2, true),
         b = random_tensor({8}, 3, true);
  for (auto _ : state) {
    nn::ops::sum(nn::ops::conv2d(x, w, b)).backward();
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32);

void BM_GeneratorInfer(benchmark::State& state) {
  auto G = models::build_generator(128, 1, 64, {}, 1);
  const Tensor z = random_tensor({256, 64}, 4);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(G.forward(z, nn::Mode::infer));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_GeneratorInfer);

void BM_GanTrainStep(benchmark::State& state) {
  auto G = models::build_generator(128, 1, 64, {}, 1);
  auto D = models::build_discriminator(128, 1, {}, 2);
  auto E = models::build_encoder(128, 1, {}, 3);
  E.strip_heads();
  E.set_trainable(false);
  const Tensor real = random_tensor({32, 1, 128, 1}, 5), walking = random_tensor({32, 1, 128, 1}, 6);
  std::vector<signal::Label> labels;
  for (int i = 0; i < 32; ++i) labels.push_back(i % 2 ? signal::Label::target : signal::Label::nontarget);
  const Tensor y = train::one_hot(labels);
  const train::TrainConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(train::gan_train_step(G, D, E, real, y, walking, y, config));
}
BENCHMARK(BM_GanTrainStep)->Unit(benchmark::kMillisecond);

// One subject-condition recording: 300 trials at 500 Hz through the whole pipeline.
void BM_Preprocess(benchmark::State& state) {
  synth::SyntheticConfig sc;
  sc.n_subjects = 1;
  const auto ds = synth::synthesize_dataset(sc);
  const train::PipelineConfig pipeline;
  for (auto _ : state) benchmark::DoNotOptimize(train::preprocess(ds.subjects[0].walking, pipeline));
}
BENCHMARK(BM_Preprocess)->Unit(benchmark::kMillisecond);

void BM_Synthesize(benchmark::State& state) {
  synth::SyntheticConfig sc;
  sc.n_subjects = 1;
  for (auto _ : state) benchmark::DoNotOptimize(synth::synthesize_dataset(sc));
}
BENCHMARK(BM_Synthesize)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

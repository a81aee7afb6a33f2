#include <benchmark/benchmark.h>

#include <vector>

#include "tnfdt/attack.hpp"
#include "tnfdt/losses.hpp"
#include "tnfdt/nn/kernels.hpp"
#include "tnfdt/nn/layers.hpp"
#include "tnfdt/nn/model.hpp"

using namespace tnfdt;

namespace {

Tensor random(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (float& v : t.values()) v = static_cast<float>(rng.normal01());
  return t;
}

// Batch 100 of the first-stage activation shape used on 28x28 inputs.
Shape activation(const benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  return Shape(100, c, 28, 28);
}

void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  nn::Conv2d<float> conv(c, c, 3, 1, 1);
  Rng rng(1);
  conv.init(rng);
  const Tensor x = random(activation(state), 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nn::Mode::train));
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  nn::Conv2d<float> conv(c, c, 3, 1, 1);
  Rng rng(1);
  conv.init(rng);
  conv.set_input_grad_needed(true);
  const Tensor x = random(activation(state), 2);
  const Tensor up = random(activation(state), 3);
  for (auto _ : state) {
    // backward consumes the cached input, so each iteration needs a fresh forward.
    state.PauseTiming();
    conv.forward(x, nn::Mode::train);
    state.ResumeTiming();
    benchmark::DoNotOptimize(conv.backward(up));
  }
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ReluThenTn(benchmark::State& state) {
  const Tensor x = random(activation(state), 4);
  for (auto _ : state) benchmark::DoNotOptimize(nn::tn_forward(nn::relu_forward(x)));
}
BENCHMARK(BM_ReluThenTn)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_ReluTnFused(benchmark::State& state) {
  const Tensor x = random(activation(state), 4);
  for (auto _ : state) benchmark::DoNotOptimize(nn::relu_tn_forward(x));
}
BENCHMARK(BM_ReluTnFused)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_TnBackwardExact(benchmark::State& state) {
  const Tensor up = random(activation(state), 5);
  for (auto _ : state) benchmark::DoNotOptimize(nn::tn_backward_exact(up, up.shape()));
}
BENCHMARK(BM_TnBackwardExact)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_MultilabelLoss(benchmark::State& state) {
  const std::size_t batch = 100, classes = 10;
  const auto logits = loss::ClassMatrix<float>::from_logits(random(Shape(batch, classes, 1, 1), 6));
  loss::ClassMatrix<double> gt(classes, batch);
  for (std::size_t b = 0; b < batch; ++b) {
    gt.at(b % classes, b) = 2.0 / 3;
    gt.at((b + 1) % classes, b) = 1.0 / 3;
  }
  for (auto _ : state) benchmark::DoNotOptimize(loss::multilabel_log_loss(gt, logits));
}
BENCHMARK(BM_MultilabelLoss);

void BM_PgdStep(benchmark::State& state) {
  nn::ModelSpec spec;
  spec.base_width = static_cast<std::size_t>(state.range(0));
  spec.tn = true;
  Rng rng(7);
  auto model = nn::build_model<float>(spec, rng);
  attack::ModelTarget<float> target(model);
  const Tensor x0 = random(Shape(50, 1, 28, 28), 8);
  const std::vector<int> labels(50, 3);
  Tensor x = x0;
  for (auto _ : state) {
    const Tensor g = target.input_gradient(x, labels);
    x = attack::pgd_step(x, x0, g, attack::default_alpha(0.1), 0.1);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_PgdStep)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "clci/autodiff.hpp"
#include "clci/loss.hpp"
#include "clci/model.hpp"
#include "clci/ops.hpp"
#include "clci/random.hpp"
#include "clci/train.hpp"

using namespace clci;

namespace {

Tensor noise(const Shape& s, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::vector<float> v(s.numel());
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor::from_data(s, std::move(v), grad);
}

}  // namespace

// args: channels, spatial size, dilation
static void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int d = static_cast<int>(state.range(2));
  const Tensor x = noise({1, c, n, n}, 1);
  ConvParams<float> p;
  p.kernel = noise({c, c, 3, 3}, 2);
  p.dilation = {d, d};
  p.padding = {d, d};
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.SetItemsProcessed(state.iterations() * 9LL * c * c * n * n);
}
BENCHMARK(BM_Conv3x3)
    ->Args({16, 64, 1})
    ->Args({64, 32, 1})
    ->Args({64, 14, 6})
    ->Args({256, 14, 1})
    ->Unit(benchmark::kMillisecond);

static void BM_Conv3x3Backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  Tensor x = noise({1, c, n, n}, 1, true);
  ConvParams<float> p;
  p.kernel = noise({c, c, 3, 3}, 2, true);
  p.padding = {1, 1};
  for (auto _ : state) {
    x.zero_grad();
    p.kernel.zero_grad();
    backward(sum(conv2d(x, p)));
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMillisecond);

// args: width factor in percent, ablation row index
static void BM_ForwardEval(benchmark::State& state) {
  ModelConfig mc;
  mc.width_factor = state.range(0) / 100.0;
  const ClciNet net = instantiate_ablation(ablation_rows()[state.range(1)], mc);
  const Tensor image = noise({1, 1, 224, 176}, 3);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(image, Mode::kEval));
  state.counters["params"] = static_cast<double>(net.parameter_count());
}
BENCHMARK(BM_ForwardEval)
    ->Args({25, 0})
    ->Args({25, 7})
    ->Args({100, 0})
    ->Args({100, 7})
    ->Unit(benchmark::kMillisecond);

// One Adam step at the overfit scale: batch 4, 64x64, width 0.25.
static void BM_TrainStep(benchmark::State& state) {
  ModelConfig mc;
  mc.width_factor = 0.25;
  mc.input_h = mc.input_w = 64;
  mc.use_aspp = mc.use_clf = mc.use_inference = state.range(0) != 0;
  ClciNet net(mc);
  gaussian_init(net.store(), InitPolicy::kFixed, 0);
  OptimState opt = OptimState::for_store(net.store(), AdamOptions{});
  const Tensor image = noise({4, 1, 64, 64}, 4);
  const Tensor target = Tensor::full({4, 1, 64, 64}, 0.0f);
  for (auto _ : state) {
    net.store().zero_grad();
    backward(dice_loss(net.forward(image, Mode::kTrain), target));
    adam_step(net.store(), opt);
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

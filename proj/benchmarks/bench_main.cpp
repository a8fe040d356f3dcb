#include <benchmark/benchmark.h>

#include <random>

#include "msdc/model.hpp"
#include "msdc/ops.hpp"
#include "msdc/sample.hpp"

using namespace msdc;

namespace {

Tensor<float> noise(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  const Var<float> x(noise({1, c, 64, 128}, 1)), w(noise({c, c, 3, 3}, 2));
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(convolve(x, w, Var<float>{}, 2, 1, 1).value().data());
  state.SetItemsProcessed(state.iterations() * c * c * 9 * 64 * 128);
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv3d(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  const Var<float> x(noise({1, c, 8, 16, 32}, 3)), w(noise({c, c, 3, 3, 3}, 4));
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(convolve(x, w, Var<float>{}, 3, 1, 1).value().data());
  state.SetItemsProcessed(state.iterations() * c * c * 27 * 8 * 16 * 32);
}
BENCHMARK(BM_Conv3d)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const Var<float> x(noise({1, 16, 8, 16, 32}, 5), true), w(noise({16, 16, 3, 3, 3}, 6), true);
  for (auto _ : state) {
    const auto y = convolve(x, w, Var<float>{}, 3, 1, 1);
    backward<float>(y, Tensor<float>::full(y.shape(), 1.0f));
  }
}
BENCHMARK(BM_Conv3dBackward)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const ModelConfig c = ModelConfig::with_base(static_cast<int>(state.range(0)), 32);
  auto params = init_params<float>(c, 1);
  const auto s = generate_synthetic_pair(random_synth_spec(64, 128, 32, 7));
  const auto b = stack_samples({&s});
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(Var<float>(b.left), Var<float>(b.right), params, c, NormMode::infer).value().data());
  }
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "vargan/layers.hpp"

namespace {

using vargan::Rng;
using vargan::Tensor;

template <typename T>
Tensor<T> random_tensor(vargan::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t;
}

// Args: channels, spatial size, stride. Batch of 16 as in desk training.
template <typename T>
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const auto stride = static_cast<std::size_t>(state.range(2));
  vargan::nn::Conv2d<T> conv(channels, channels, stride);
  Rng rng(1);
  conv.initialize(rng);
  const auto x = random_tensor<T>({16, channels, size, size}, 2);
  const auto y = conv.forward(x);
  const auto g = random_tensor<T>(y.shape(), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv.forward(x));
    benchmark::DoNotOptimize(conv.backward(g));
  }
  const double macs = 16.0 * static_cast<double>(y.size() / 16) * channels * 9.0 * 3.0;
  state.counters["GMAC/s"] = benchmark::Counter(macs / 1e9, benchmark::Counter::kIsIterationInvariantRate);
}

template <typename T>
void BM_DenseForwardBackward(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto out = static_cast<std::size_t>(state.range(1));
  vargan::nn::Dense<T> dense(in, out);
  Rng rng(1);
  dense.initialize(rng);
  const auto x = random_tensor<T>({16, in}, 2);
  const auto g = random_tensor<T>({16, out}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dense.forward(x));
    benchmark::DoNotOptimize(dense.backward(g));
  }
}

void BM_Upsample2x2(benchmark::State& state) {
  vargan::nn::Upsample2x2<float> up;
  const auto x = random_tensor<float>({16, 32, 16, 16}, 2);
  const auto y = up.forward(x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(up.forward(x));
    benchmark::DoNotOptimize(up.backward(y));
  }
}

}  // namespace

BENCHMARK(BM_Conv2dForwardBackward<float>)->Args({32, 32, 1})->Args({32, 16, 1})->Args({64, 32, 1})->Args({64, 8, 1})->Args({64, 32, 2})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForwardBackward<double>)->Args({32, 32, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseForwardBackward<float>)->Args({74, 2048})->Args({4096, 1024})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample2x2)->Unit(benchmark::kMicrosecond);

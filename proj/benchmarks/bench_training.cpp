#include <benchmark/benchmark.h>

#include "vargan/training.hpp"

namespace {

using vargan::train::Method;

// One optimisation step of each method with the default configuration on 32x32 faces.
void BM_TrainStep(benchmark::State& state) {
  const Method methods[] = {Method::vargan, Method::cbigan, Method::began};
  vargan::synth::SynthConfig synth;
  synth.image_size = 32;
  const auto data = vargan::synth::generate_dataset(256, synth, 1);
  vargan::train::TrainerConfig cfg;
  cfg.method = methods[state.range(0)];
  auto s = vargan::train::init_state(cfg, data);
  for (auto _ : state) vargan::train::step(s, data);
  state.SetLabel(vargan::train::to_string(cfg.method));
}

}  // namespace

BENCHMARK(BM_TrainStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

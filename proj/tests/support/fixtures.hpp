#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vargan/architectures.hpp"
#include "vargan/gradient_check.hpp"
#include "vargan/net.hpp"
#include "vargan/rng.hpp"
#include "vargan/synth.hpp"
#include "vargan/training.hpp"

namespace vargan::testing {

// Smallest architecture that exercises every layer kind: 8x8 images.
inline arch::ArchConfig tiny_arch() {
  arch::ArchConfig a;
  a.image_size = 8;
  a.seed_size = 4;
  a.latent_dim = 3;
  a.landmark_count = 2;
  a.decoder_channels = 2;
  a.encoder_channels = {2, 3};
  a.code_dim = 3;
  a.regressor_channels = 2;
  a.regressor_hidden = 5;
  return a;
}

// Small trainer over 16x16 synthetic faces.
inline train::TrainerConfig tiny_trainer(train::Method method, std::size_t steps = 12) {
  train::TrainerConfig c;
  c.method = method;
  c.arch.seed_size = 4;
  c.arch.latent_dim = 6;
  c.arch.decoder_channels = 4;
  c.arch.encoder_channels = {4, 8};
  c.arch.code_dim = 8;
  c.arch.regressor_channels = 4;
  c.arch.regressor_hidden = 16;
  c.batch = 4;
  c.steps = steps;
  c.seed = 5;
  return c;
}

inline synth::Dataset tiny_dataset(std::size_t n = 48, std::uint64_t seed = 3) {
  synth::SynthConfig cfg;
  cfg.image_size = 16;
  return synth::generate_dataset(n, cfg, seed);
}

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Compares the parameter gradients accumulated by `objective` against central
// differences of its value, on a seeded subsample of entries per parameter.
// Returns the worst relative error max(|a-n|) / max(|a|, |n|, floor).
inline double parameter_fd_error(nn::Net<double>& net, const std::function<double()>& objective, std::uint64_t seed,
                                 std::size_t per_parameter = 6, double step = 1e-5, double floor = 1e-4) {
  net.zero_grad();
  objective();
  std::vector<Tensor<double>> analytic;
  for (auto& p : net.parameters()) analytic.push_back(p.param->grad);
  Rng rng(seed);
  double worst = 0.0;
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].param->value;
    const std::size_t n = value.size();
    for (std::size_t s = 0; s < std::min(per_parameter, n); ++s) {
      const std::size_t i = n <= per_parameter ? s : rng.below(n);
      const double saved = value[i];
      value[i] = saved + step;
      const double up = objective();
      value[i] = saved - step;
      const double down = objective();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, nn::relative_error(analytic[k][i], numeric, floor));
    }
  }
  net.zero_grad();
  return worst;
}

// Max relative error between an analytic tensor gradient and central differences of f.
inline double tensor_fd_error(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                              const Tensor<double>& analytic, double floor = 1e-4) {
  const auto numeric = nn::numeric_gradient(f, x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, nn::relative_error(analytic[i], numeric[i], floor));
  return worst;
}

}  // namespace vargan::testing

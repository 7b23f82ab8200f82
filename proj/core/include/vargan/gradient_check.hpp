#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "vargan/net.hpp"

namespace vargan::nn {

// Scalar loss over a net output; writes d(loss)/d(output) into `grad`
// (already shaped like `output`).
using LossFunction = std::function<double(const Tensor<double>& output, Tensor<double>& grad)>;

struct GradientCheckOptions {
  double tolerance = 1e-6;
  double step = 1e-5;
  // Entries sampled per parameter tensor (all entries if the tensor is smaller).
  std::size_t samples_per_parameter = 12;
  bool check_input = true;
  // Relative error denominator is max(|analytic|, |numeric|, floor).
  double floor = 1e-4;
  std::uint64_t seed = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t entries_checked = 0;
  bool passed = false;
};

double relative_error(double analytic, double numeric, double floor);

// Compares backprop gradients against central differences on a seeded random
// subsample of every parameter tensor and, optionally, the input.
GradientCheckReport gradient_check(Net<double>& net, const LossFunction& loss, const Tensor<double>& x,
                                   const GradientCheckOptions& options = {});

// Central-difference gradient of a scalar function of a tensor.
Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                                double step = 1e-5);

}  // namespace vargan::nn

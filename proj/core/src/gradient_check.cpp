#include "vargan/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vargan::nn {

namespace {

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (size <= count) return idx;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(size - i)]);
  idx.resize(count);
  return idx;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradientCheckReport gradient_check(Net<double>& net, const LossFunction& loss, const Tensor<double>& x,
                                   const GradientCheckOptions& options) {
  auto evaluate = [&](const Tensor<double>& input) {
    Tensor<double> out = net.forward(input);
    Tensor<double> grad(out.shape());
    return loss(out, grad);
  };

  net.zero_grad();
  Tensor<double> out = net.forward(x);
  Tensor<double> upstream(out.shape());
  loss(out, upstream);
  const Tensor<double> input_grad = net.backward(upstream);

  GradientCheckReport report;
  Rng rng(options.seed);
  const double h = options.step;
  auto record = [&](const std::string& name, double analytic, double numeric) {
    const double err = relative_error(analytic, numeric, options.floor);
    ++report.entries_checked;
    if (report.worst_entry.empty() || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_entry = name;
    }
  };

  for (auto& ref : net.parameters()) {
    auto& value = ref.param->value;
    const Tensor<double> analytic = ref.param->grad;
    for (std::size_t i : sample_indices(value.size(), options.samples_per_parameter, rng)) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = evaluate(x);
      value[i] = saved - h;
      const double down = evaluate(x);
      value[i] = saved;
      record(ref.name + "[" + std::to_string(i) + "]", analytic[i], (up - down) / (2.0 * h));
    }
  }

  if (options.check_input) {
    Tensor<double> probe = x;
    for (std::size_t i : sample_indices(x.size(), options.samples_per_parameter, rng)) {
      const double saved = probe[i];
      probe[i] = saved + h;
      const double up = evaluate(probe);
      probe[i] = saved - h;
      const double down = evaluate(probe);
      probe[i] = saved;
      record("input[" + std::to_string(i) + "]", input_grad[i], (up - down) / (2.0 * h));
    }
  }

  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                                double step) {
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace vargan::nn

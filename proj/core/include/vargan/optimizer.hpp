#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "vargan/net.hpp"

namespace vargan::nn {

struct AdamSettings {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Shifted-variable form of Nesterov momentum: the stored parameters are the
// look-ahead point, so with g taken there
//   v <- momentum * v - lr * g
//   theta <- theta + momentum * v - lr * g
struct NesterovSettings {
  double lr = 0.01;
  double momentum = 0.9;
};

using OptimizerRule = std::variant<AdamSettings, NesterovSettings>;

std::string describe(const OptimizerRule& rule);

// Per-parameter optimizer state bound to one Net's parameter registry.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerRule rule, Net<T>& net);

  // Applies one update from the gradients currently stored in `net`.
  // Throws NonFiniteError naming the parameter if any gradient is NaN/Inf;
  // in that case no parameter is modified.
  void step(Net<T>& net);

  const OptimizerRule& rule() const { return rule_; }
  std::uint64_t step_count() const { return t_; }
  void set_step_count(std::uint64_t t) { t_ = t; }

  struct NamedMoment {
    std::string name;  // "<param>.m", "<param>.v" or "<param>.velocity"
    Tensor<T>* tensor;
  };
  std::vector<NamedMoment> moments();

 private:
  OptimizerRule rule_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> first_;   // Adam m, or Nesterov velocity
  std::vector<Tensor<T>> second_;  // Adam v
  std::uint64_t t_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace vargan::nn

#include "vargan/optimizer.hpp"

#include <cmath>
#include <sstream>

namespace vargan::nn {

std::string describe(const OptimizerRule& rule) {
  std::ostringstream out;
  if (const auto* a = std::get_if<AdamSettings>(&rule)) {
    out << "adam(lr=" << a->lr << ", beta1=" << a->beta1 << ", beta2=" << a->beta2 << ", eps=" << a->eps << ")";
  } else {
    const auto& n = std::get<NesterovSettings>(rule);
    out << "nesterov(lr=" << n.lr << ", momentum=" << n.momentum << ")";
  }
  return out.str();
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerRule rule, Net<T>& net) : rule_(rule) {
  const bool adam = std::holds_alternative<AdamSettings>(rule_);
  for (const auto& p : net.parameters()) {
    names_.push_back(p.name);
    first_.emplace_back(p.param->value.shape());
    if (adam) second_.emplace_back(p.param->value.shape());
  }
}

template <typename T>
void Optimizer<T>::step(Net<T>& net) {
  auto params = net.parameters();
  if (params.size() != names_.size()) {
    throw ValidationError("optimizer bound to " + std::to_string(names_.size()) + " parameters, net has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != names_[i] || params[i].param->grad.shape() != first_[i].shape()) {
      throw ValidationError("optimizer state does not match parameter '" + params[i].name + "'");
    }
    require_finite(params[i].param->grad, "gradient of " + params[i].name);
  }
  ++t_;
  if (const auto* a = std::get_if<AdamSettings>(&rule_)) {
    const double c1 = 1.0 - std::pow(a->beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(a->beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(a->beta1), b2 = static_cast<T>(a->beta2);
    const T lr = static_cast<T>(a->lr), eps = static_cast<T>(a->eps);
    const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = params[i].param->value;
      const auto& grad = params[i].param->grad;
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < value.size(); ++j) {
        const T g = grad[j];
        m[j] = b1 * m[j] + (T{1} - b1) * g;
        v[j] = b2 * v[j] + (T{1} - b2) * g * g;
        const T m_hat = m[j] * inv_c1;
        const T v_hat = v[j] * inv_c2;
        value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  } else {
    const auto& n = std::get<NesterovSettings>(rule_);
    const T mu = static_cast<T>(n.momentum), lr = static_cast<T>(n.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = params[i].param->value;
      const auto& grad = params[i].param->grad;
      auto& vel = first_[i];
      for (std::size_t j = 0; j < value.size(); ++j) {
        vel[j] = mu * vel[j] - lr * grad[j];
        value[j] += mu * vel[j] - lr * grad[j];
      }
    }
  }
}

template <typename T>
std::vector<typename Optimizer<T>::NamedMoment> Optimizer<T>::moments() {
  std::vector<NamedMoment> out;
  const bool adam = std::holds_alternative<AdamSettings>(rule_);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.push_back({names_[i] + (adam ? ".m" : ".velocity"), &first_[i]});
    if (adam) out.push_back({names_[i] + ".v", &second_[i]});
  }
  return out;
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace vargan::nn

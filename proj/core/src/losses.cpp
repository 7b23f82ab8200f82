#include "vargan/losses.hpp"

#include <algorithm>
#include <cmath>

namespace vargan::loss {

void VarganHyper::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (!(lambda_k > 0.0)) throw ValidationError("lambda_k must be positive");
  if (!(log_floor > 0.0)) throw ValidationError("log_floor must be positive");
  if (!(adv_weight >= 0.0) || !(reg_weight >= 0.0)) throw ValidationError("loss weights must be non-negative");
}

void CbiganHyper::validate() const {
  if (!(theta >= 0.0)) throw ValidationError("cBiGAN theta must be non-negative");
  if (!(log_floor > 0.0 && log_floor < 0.5)) throw ValidationError("log_floor must lie in (0, 0.5)");
}

template <typename T>
LossGrad<T> regression_loss(const Tensor<T>& targets, const Tensor<T>& predictions, double log_floor) {
  targets.require_same_shape(predictions, "regression_loss");
  const double n = static_cast<double>(targets.size());
  LossGrad<T> out{0.0, Tensor<T>(predictions.shape())};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double arg = 1.0 - (static_cast<double>(targets[i]) - static_cast<double>(predictions[i]));
    if (arg > log_floor) {
      out.value -= std::log(arg);
      out.grad[i] = static_cast<T>(-1.0 / (arg * n));
    } else {
      out.value -= std::log(log_floor);
    }
  }
  out.value /= n;
  return out;
}

template <typename T>
LossGrad<T> reconstruction_loss(const Tensor<T>& v, const Tensor<T>& reconstruction) {
  v.require_same_shape(reconstruction, "reconstruction_loss");
  const double n = static_cast<double>(v.size());
  LossGrad<T> out{0.0, Tensor<T>(v.shape())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double diff = static_cast<double>(v[i]) - static_cast<double>(reconstruction[i]);
    out.value += diff * diff;
    out.grad[i] = static_cast<T>(-2.0 * diff / n);
  }
  out.value /= n;
  return out;
}

BeganLosses began_losses(double loss_real, double loss_fake, double loss_regression, double k,
                         const VarganHyper& hyper) {
  if (loss_real < 0.0 || loss_fake < 0.0) throw ValidationError("reconstruction losses must be non-negative");
  if (k < 0.0 || k > 1.0) throw ValidationError("k must lie in [0, 1]");
  return {loss_real - k * loss_fake, hyper.adv_weight * loss_fake + hyper.reg_weight * loss_regression};
}

double k_update(double k, double loss_real, double loss_fake, const VarganHyper& hyper) {
  if (k < 0.0 || k > 1.0) throw ValidationError("k must lie in [0, 1]");
  return std::clamp(k + hyper.lambda_k * (hyper.gamma * loss_real - loss_fake), 0.0, 1.0);
}

template <typename T>
LossGrad<T> log_probability_loss(const Tensor<T>& p, bool toward_one, double log_floor) {
  const double n = static_cast<double>(p.size());
  LossGrad<T> out{0.0, Tensor<T>(p.shape())};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double raw = static_cast<double>(p[i]);
    if (!(raw >= 0.0 && raw <= 1.0)) {
      throw ValidationError("probability outside [0, 1] at index " + std::to_string(i));
    }
    const double q = std::clamp(raw, log_floor, 1.0 - log_floor);
    const bool clamped = q != raw;
    if (toward_one) {
      out.value -= std::log(q);
      if (!clamped) out.grad[i] = static_cast<T>(-1.0 / (q * n));
    } else {
      out.value -= std::log1p(-q);
      if (!clamped) out.grad[i] = static_cast<T>(1.0 / ((1.0 - q) * n));
    }
  }
  out.value /= n;
  return out;
}

template <typename T>
LossGrad<T> squared_penalty(const Tensor<T>& s, const Tensor<T>& y, double theta) {
  s.require_same_shape(y, "squared_penalty");
  const double n = static_cast<double>(s.size());
  LossGrad<T> out{0.0, Tensor<T>(s.shape())};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double diff = static_cast<double>(s[i]) - static_cast<double>(y[i]);
    out.value += diff * diff;
    out.grad[i] = static_cast<T>(2.0 * theta * diff / n);
  }
  out.value *= theta / n;
  return out;
}

template <typename T>
CbiganLosses cbigan_losses(const Tensor<T>& p_real, const Tensor<T>& p_fake, const Tensor<T>& p_encoded,
                           const Tensor<T>& s_minus, const Tensor<T>& targets, const CbiganHyper& hyper) {
  const double floor = hyper.log_floor;
  CbiganLosses out;
  const double log_p_real = -log_probability_loss(p_real, true, floor).value;
  const double log_not_fake = -log_probability_loss(p_fake, false, floor).value;
  const double log_not_encoded = -log_probability_loss(p_encoded, false, floor).value;
  out.discriminator = log_p_real + log_not_fake + log_not_encoded;
  out.generator = -log_probability_loss(p_fake, true, floor).value;
  out.penalty = squared_penalty(s_minus, targets, hyper.theta).value;
  out.encoder = -log_probability_loss(p_encoded, true, floor).value + out.penalty;
  return out;
}

#define VARGAN_INSTANTIATE_LOSSES(T)                                                                   \
  template LossGrad<T> regression_loss<T>(const Tensor<T>&, const Tensor<T>&, double);                \
  template LossGrad<T> reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template LossGrad<T> log_probability_loss<T>(const Tensor<T>&, bool, double);                       \
  template LossGrad<T> squared_penalty<T>(const Tensor<T>&, const Tensor<T>&, double);                \
  template CbiganLosses cbigan_losses<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                         const Tensor<T>&, const Tensor<T>&, const CbiganHyper&);

VARGAN_INSTANTIATE_LOSSES(float)
VARGAN_INSTANTIATE_LOSSES(double)

}  // namespace vargan::loss

#pragma once

#include "vargan/tensor.hpp"

namespace vargan::loss {

struct VarganHyper {
  double gamma = 0.5;          // equilibrium target
  double adv_weight = 0.97;    // weight of L(G(z|y)) in the generator loss
  double reg_weight = 0.03;    // weight of the regression loss in the generator loss
  double lambda_k = 0.001;     // learning rate of k
  double log_floor = 1e-6;     // clamp for log arguments

  void validate() const;
};

struct CbiganHyper {
  double theta = 0.8;          // encoder regression penalty weight
  double log_floor = 1e-6;

  void validate() const;
};

// Scalar loss value with its gradient w.r.t. one input tensor.
template <typename T>
struct LossGrad {
  double value = 0.0;
  Tensor<T> grad;
};

// Mean over batch and coordinates of -log(max(1 - (y - r), floor)).
// Gradient is w.r.t. the regressor outputs r; zero where the clamp is active.
template <typename T>
LossGrad<T> regression_loss(const Tensor<T>& targets, const Tensor<T>& predictions, double log_floor);

// Autoencoder loss mean((v - D(v))^2) over all pixels. Gradient is w.r.t. the
// reconstruction D(v); the gradient w.r.t. v through the direct path is its negation.
template <typename T>
LossGrad<T> reconstruction_loss(const Tensor<T>& v, const Tensor<T>& reconstruction);

struct BeganLosses {
  double discriminator = 0.0;  // L_d = L(x) - k * L(G(z|y))
  double generator = 0.0;      // L_g = adv_weight * L(G(z|y)) + reg_weight * L_R
};

BeganLosses began_losses(double loss_real, double loss_fake, double loss_regression, double k,
                         const VarganHyper& hyper);

// clamp(k + lambda_k * (gamma * L(x) - L(G(z|y))), 0, 1)
double k_update(double k, double loss_real, double loss_fake, const VarganHyper& hyper);

// Mean of -log p (toward_one) or -log(1 - p) over a batch of probabilities,
// with p clamped into [floor, 1 - floor]. Gradient w.r.t. p, zero where clamped.
template <typename T>
LossGrad<T> log_probability_loss(const Tensor<T>& p, bool toward_one, double log_floor);

// theta * mean((s - y)^2); gradient w.r.t. s.
template <typename T>
LossGrad<T> squared_penalty(const Tensor<T>& s, const Tensor<T>& y, double theta);

// cBiGAN objective values as written (batch means):
//   L_D = log p_r + log(1 - p_I) + log(1 - p_s)   (discriminator maximises)
//   L_G = log p_I                                  (generator maximises)
//   L_E = log p_s + theta * mean((s - y)^2)        (encoder maximises the log
//                                                   term, minimises the penalty)
struct CbiganLosses {
  double discriminator = 0.0;
  double generator = 0.0;
  double encoder = 0.0;
  double penalty = 0.0;
};

template <typename T>
CbiganLosses cbigan_losses(const Tensor<T>& p_real, const Tensor<T>& p_fake, const Tensor<T>& p_encoded,
                           const Tensor<T>& s_minus, const Tensor<T>& targets, const CbiganHyper& hyper);

}  // namespace vargan::loss

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vargan/rng.hpp"
#include "vargan/tensor.hpp"

namespace vargan::nn {

enum class LayerKind { dense, conv2d, maxpool2x2, upsample2x2, activation, flatten, reshape };
enum class Activation { elu, relu, tanh, sigmoid };

const char* to_string(LayerKind kind);
const char* to_string(Activation kind);
Activation parse_activation(const std::string& name);

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Elementwise activation. Throws NonFiniteError on NaN/Inf input.
template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x);

// A differentiable layer over batched tensors. Shapes passed to output_shape()
// exclude the batch axis. forward() caches what backward() needs; backward()
// accumulates into parameter gradients and returns the input gradient.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::string describe() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual void initialize(Rng& /*rng*/) {}
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  LayerKind kind() const override { return LayerKind::dense; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Parameter<T> weight_;  // (out, in)
  Parameter<T> bias_;    // (out)
  Tensor<T> input_;
};

// 3x3 cross-correlation with zero padding of one pixel on every side, so
// stride 1 keeps H x W and stride 2 yields ceil(H/2) x ceil(W/2).
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kPad = 1;

  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t stride = 1);

  LayerKind kind() const override { return LayerKind::conv2d; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

  std::size_t in_channels() const { return in_c_; }
  std::size_t out_channels() const { return out_c_; }
  std::size_t stride() const { return stride_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_c_;
  std::size_t out_c_;
  std::size_t stride_;
  Parameter<T> weight_;  // (out, in, 3, 3)
  Parameter<T> bias_;    // (out)
  Shape input_shape_;
  std::vector<T> scratch_;
  std::vector<T> col_;
};

template <typename T>
class MaxPool2x2 final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::maxpool2x2; }
  std::string describe() const override { return "maxpool2x2"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2x2>(*this); }

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

// Nearest-neighbour 2x upsampling: every pixel becomes a 2x2 block.
template <typename T>
class Upsample2x2 final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::upsample2x2; }
  std::string describe() const override { return "upsample2x2"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Upsample2x2>(*this); }

 private:
  Shape input_shape_;
};

template <typename T>
class ActivationLayer final : public Layer<T> {
 public:
  explicit ActivationLayer(Activation fn) : fn_(fn) {}

  LayerKind kind() const override { return LayerKind::activation; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ActivationLayer>(*this); }

  Activation function() const { return fn_; }

 private:
  Activation fn_;
  Tensor<T> output_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  std::string describe() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override { return {shape_size(input)}; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape input_shape_;
};

// Reinterprets each sample's features as `target` (for example a dense output
// as a (C, H, W) volume).
template <typename T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(Shape target) : target_(std::move(target)) {}

  LayerKind kind() const override { return LayerKind::reshape; }
  std::string describe() const override { return "reshape" + shape_string(target_); }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Reshape>(*this); }

 private:
  Shape target_;
  Shape input_shape_;
};

}  // namespace vargan::nn

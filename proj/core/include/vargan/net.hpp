#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vargan/layers.hpp"

namespace vargan::nn {

template <typename T>
struct ParamRef {
  std::string name;  // "<layer label>.<weight|bias>"
  Parameter<T>* param;
};

// Ordered chain of layers with a registry of uniquely named parameters.
// Shapes exclude the batch axis.
template <typename T>
class Net {
 public:
  Net(std::string role, Shape input_shape);

  Net(const Net& other);
  Net& operator=(const Net& other);
  Net(Net&&) noexcept = default;
  Net& operator=(Net&&) noexcept = default;

  // Appends a layer. Throws ValidationError if its input shape does not chain
  // or the label is already taken.
  Net& add(std::string label, std::unique_ptr<Layer<T>> layer);

  // Appends every layer of `other` with labels prefixed by `prefix`.
  Net& append(const Net& other, const std::string& prefix);

  Tensor<T> forward(const Tensor<T>& x);
  // Output of the layer labelled `label` (inclusive). Invalidates backward until the next forward.
  Tensor<T> forward_until(const Tensor<T>& x, const std::string& label);
  // Accumulates parameter gradients and returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& grad_output);

  void zero_grad();
  void initialize(Rng& rng);

  std::vector<ParamRef<T>> parameters();
  std::size_t parameter_count() const;

  const std::string& role() const { return role_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

  // One line per layer: label, description, output shape.
  std::string summary() const;

 private:
  std::string role_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::string> labels_;
  std::vector<Shape> shapes_;  // output shape after each layer
  Shape last_batch_output_;
};

extern template class Net<float>;
extern template class Net<double>;

}  // namespace vargan::nn

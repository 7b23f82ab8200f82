#include "vargan/net.hpp"

#include <algorithm>
#include <sstream>

namespace vargan::nn {

template <typename T>
Net<T>::Net(std::string role, Shape input_shape)
    : role_(std::move(role)), input_shape_(std::move(input_shape)), output_shape_(input_shape_) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ValidationError(role_ + ": input shape must be non-empty");
  }
}

template <typename T>
Net<T>::Net(const Net& other)
    : role_(other.role_),
      input_shape_(other.input_shape_),
      output_shape_(other.output_shape_),
      labels_(other.labels_),
      shapes_(other.shapes_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Net<T>& Net<T>::operator=(const Net& other) {
  if (this != &other) {
    Net copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
Net<T>& Net<T>::add(std::string label, std::unique_ptr<Layer<T>> layer) {
  if (std::find(labels_.begin(), labels_.end(), label) != labels_.end()) {
    throw ValidationError(role_ + ": duplicate layer label '" + label + "'");
  }
  Shape out;
  try {
    out = layer->output_shape(output_shape_);
  } catch (const ValidationError& e) {
    throw ValidationError(role_ + ": layer '" + label + "': " + e.what());
  }
  output_shape_ = out;
  shapes_.push_back(std::move(out));
  labels_.push_back(std::move(label));
  layers_.push_back(std::move(layer));
  return *this;
}

template <typename T>
Net<T>& Net<T>::append(const Net& other, const std::string& prefix) {
  if (other.input_shape_ != output_shape_) {
    throw ValidationError(role_ + ": cannot append " + other.role_ + " expecting input " +
                          shape_string(other.input_shape_) + " after output " + shape_string(output_shape_));
  }
  for (std::size_t i = 0; i < other.layers_.size(); ++i) add(prefix + other.labels_[i], other.layers_[i]->clone());
  return *this;
}

template <typename T>
Tensor<T> Net<T>::forward(const Tensor<T>& x) {
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw ValidationError(role_ + ": expected input (batch, " + shape_string(input_shape_) + "), got " +
                          shape_string(x.shape()));
  }
  require_finite(x, role_ + " input");
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h);
    require_finite(h, role_ + " layer '" + labels_[i] + "' output");
  }
  last_batch_output_ = h.shape();
  return h;
}

template <typename T>
Tensor<T> Net<T>::forward_until(const Tensor<T>& x, const std::string& label) {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw ValidationError(role_ + ": no layer labelled '" + label + "'");
  const auto stop = static_cast<std::size_t>(it - labels_.begin());
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw ValidationError(role_ + ": expected input (batch, " + shape_string(input_shape_) + "), got " +
                          shape_string(x.shape()));
  }
  Tensor<T> h = x;
  for (std::size_t i = 0; i <= stop; ++i) {
    h = layers_[i]->forward(h);
    require_finite(h, role_ + " layer '" + labels_[i] + "' output");
  }
  // Later layers hold stale caches; a backward now would be inconsistent.
  last_batch_output_.clear();
  return h;
}

template <typename T>
Tensor<T> Net<T>::backward(const Tensor<T>& grad_output) {
  if (last_batch_output_.empty()) throw ValidationError(role_ + ": backward called before forward");
  if (grad_output.shape() != last_batch_output_) {
    throw ValidationError(role_ + ": upstream gradient " + shape_string(grad_output.shape()) +
                          " does not match output " + shape_string(last_batch_output_));
  }
  Tensor<T> g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <typename T>
void Net<T>::zero_grad() {
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) p->grad.fill(T{0});
  }
}

template <typename T>
void Net<T>::initialize(Rng& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

template <typename T>
std::vector<ParamRef<T>> Net<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto* p : layers_[i]->parameters()) out.push_back({labels_[i] + "." + p->name, p});
  }
  return out;
}

template <typename T>
std::size_t Net<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    for (auto* p : const_cast<Layer<T>&>(*l).parameters()) n += p->value.size();
  }
  return n;
}

template <typename T>
std::string Net<T>::summary() const {
  std::ostringstream out;
  out << role_ << " input " << shape_string(input_shape_) << '\n';
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out << "  " << labels_[i] << ": " << layers_[i]->describe() << " -> " << shape_string(shapes_[i]) << '\n';
  }
  return out.str();
}

template class Net<float>;
template class Net<double>;

}  // namespace vargan::nn

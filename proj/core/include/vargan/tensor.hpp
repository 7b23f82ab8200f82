#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <type_traits>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vargan/error.hpp"

namespace vargan {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ')';
  return out.str();
}

// Dense row-major n-dimensional array. Images are (batch, channels, height, width),
// vectors are (batch, features).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
      throw ValidationError("tensor shape " + shape_string(shape_) + " does not match " +
                            std::to_string(data_.size()) + " values");
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Element count per leading-axis entry.
  std::size_t stride0() const { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  std::optional<std::size_t> first_non_finite() const {
    if constexpr (std::is_same_v<T, float> || std::is_same_v<T, double>) {
      // All-ones exponent means Inf or NaN; integer form so the scan vectorizes.
      using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      constexpr U kExp = static_cast<U>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
      U bad = 0;
      for (std::size_t i = 0; i < data_.size(); ++i) {
        U bits;
        std::memcpy(&bits, &data_[i], sizeof bits);
        bad |= static_cast<U>((bits & kExp) == kExp);
      }
      if (!bad) return std::nullopt;
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) return i;
    }
    return std::nullopt;
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(T scale) {
    for (auto& v : data_) v *= scale;
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* context) const {
    if (shape_ != other.shape_) {
      throw ValidationError(std::string(context) + ": shape mismatch " + shape_string(shape_) +
                            " vs " + shape_string(other.shape_));
    }
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (auto d : shape) {
      if (d == 0) throw ValidationError("tensor dimensions must be positive, got " + shape_string(shape));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

// Throws NonFiniteError naming `where` and the flat index of the first NaN/Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& where) {
  if (auto idx = t.first_non_finite()) {
    throw NonFiniteError("non-finite value at index " + std::to_string(*idx) + " in " + where);
  }
}

}  // namespace vargan

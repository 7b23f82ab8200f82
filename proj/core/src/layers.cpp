#include "vargan/layers.hpp"

// Route every product through the packed GEMM kernel: the coefficient-based
// small-product path peels by address alignment, which makes results depend
// on where buffers happen to be allocated.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 1
#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace vargan::nn {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatRM<T>>;
template <typename T>
using ConstMapVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using MapVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
T apply_activation(Activation fn, T v) {
  switch (fn) {
    case Activation::elu:
      return v > T{0} ? v : std::expm1(v);
    case Activation::relu:
      return v > T{0} ? v : T{0};
    case Activation::tanh:
      return std::tanh(v);
    case Activation::sigmoid:
      if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
      {
        const T e = std::exp(v);
        return e / (T{1} + e);
      }
  }
  return v;
}

// Derivative expressed through the activation's output y = f(v).
template <typename T>
T activation_slope(Activation fn, T y) {
  switch (fn) {
    case Activation::elu:
      return y > T{0} ? T{1} : y + T{1};
    case Activation::relu:
      return y > T{0} ? T{1} : T{0};
    case Activation::tanh:
      return T{1} - y * y;
    case Activation::sigmoid:
      return y * (T{1} - y);
  }
  return T{1};
}

// grad * slope, with the switch hoisted so the loops vectorize.
template <typename T>
void slope_product(Activation fn, const T* y, const T* g, T* out, std::size_t n) {
  switch (fn) {
    case Activation::elu:
      for (std::size_t i = 0; i < n; ++i) out[i] = g[i] * (y[i] > T{0} ? T{1} : y[i] + T{1});
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = y[i] > T{0} ? g[i] : T{0};
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = g[i] * (T{1} - y[i] * y[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = g[i] * y[i] * (T{1} - y[i]);
      break;
  }
}

void require_rank(const Shape& shape, std::size_t rank, const std::string& layer) {
  if (shape.size() != rank) {
    throw ValidationError(layer + " expects rank " + std::to_string(rank) + " input, got " +
                          shape_string(shape));
  }
}

template <typename T>
void init_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}


// Unfolds one (C, H, W) sample into C*9 rows of Ho*Wo values; consecutive rows
// start `pitch` elements apart.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t stride,
            std::size_t ho, std::size_t wo, std::size_t pitch, T* col_base) {
  const auto hs = static_cast<std::ptrdiff_t>(h), ws = static_cast<std::ptrdiff_t>(w);
  std::size_t r = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < 3; ++kx, ++r) {
        T* col = col_base + r * pitch;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride) + ky - 1;
          if (iy < 0 || iy >= hs) {
            std::fill(col, col + wo, T{0});
            col += wo;
            continue;
          }
          const T* row = x + (c * h + static_cast<std::size_t>(iy)) * w;
          if (stride == 1) {
            // ix = ox + kx - 1; only the first or last column can fall outside.
            const std::size_t lo = kx == 0 ? 1 : 0, hi = kx == 2 ? wo - 1 : wo;
            if (lo) col[0] = T{0};
            const auto off = static_cast<std::size_t>(kx);
            std::copy(row + lo + off - 1, row + hi + off - 1, col + lo);
            if (hi < wo) col[wo - 1] = T{0};
            col += wo;
            continue;
          }
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride) + kx - 1;
            *col++ = (ix < 0 || ix >= ws) ? T{0} : row[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into a (C, H, W) sample.
template <typename T>
void col2im(const T* col_base, std::size_t channels, std::size_t h, std::size_t w, std::size_t stride,
            std::size_t ho, std::size_t wo, std::size_t pitch, T* x) {
  const auto hs = static_cast<std::ptrdiff_t>(h), ws = static_cast<std::ptrdiff_t>(w);
  std::size_t r = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < 3; ++kx, ++r) {
        const T* col = col_base + r * pitch;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride) + ky - 1;
          if (iy < 0 || iy >= hs) {
            col += wo;
            continue;
          }
          T* row = x + (c * h + static_cast<std::size_t>(iy)) * w;
          if (stride == 1) {
            const std::size_t lo = kx == 0 ? 1 : 0, hi = kx == 2 ? wo - 1 : wo;
            const auto off = static_cast<std::size_t>(kx);
            for (std::size_t ox = lo; ox < hi; ++ox) row[ox + off - 1] += col[ox];
            col += wo;
            continue;
          }
          for (std::size_t ox = 0; ox < wo; ++ox, ++col) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride) + kx - 1;
            if (ix >= 0 && ix < ws) row[ix] += *col;
          }
        }
      }
    }
  }
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::upsample2x2: return "upsample2x2";
    case LayerKind::activation: return "activation";
    case LayerKind::flatten: return "flatten";
    case LayerKind::reshape: return "reshape";
  }
  return "?";
}

const char* to_string(Activation kind) {
  switch (kind) {
    case Activation::elu: return "elu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "elu") return Activation::elu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ValidationError("unknown activation '" + name + "'");
}

template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x) {
  require_finite(x, std::string("activation(") + to_string(kind) + ") input");
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply_activation(kind, x[i]);
  return y;
}

// ---- Dense -----------------------------------------------------------------

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features)
    : in_(in_features),
      out_(out_features),
      weight_{"weight", Tensor<T>({out_features, in_features}), Tensor<T>({out_features, in_features})},
      bias_{"bias", Tensor<T>({out_features}), Tensor<T>({out_features})} {}

template <typename T>
std::string Dense<T>::describe() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& input) const {
  if (shape_size(input) != in_) {
    throw ValidationError(describe() + " got input of shape " + shape_string(input));
  }
  return {out_};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
  if (x.rank() < 2 || x.stride0() != in_) {
    throw ValidationError(describe() + " got input of shape " + shape_string(x.shape()));
  }
  input_ = x;
  const std::size_t batch = x.dim(0);
  Tensor<T> y({batch, out_});
  ConstMapRM<T> X(x.data(), batch, in_);
  ConstMapRM<T> W(weight_.value.data(), out_, in_);
  ConstMapVec<T> b(bias_.value.data(), out_);
  MapRM<T> Y(y.data(), batch, out_);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += b.transpose();
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw ValidationError(describe() + ": backward called before forward");
  const std::size_t batch = input_.dim(0);
  if (grad_out.size() != batch * out_) {
    throw ValidationError(describe() + ": upstream gradient shape " + shape_string(grad_out.shape()));
  }
  ConstMapRM<T> X(input_.data(), batch, in_);
  ConstMapRM<T> G(grad_out.data(), batch, out_);
  ConstMapRM<T> W(weight_.value.data(), out_, in_);
  MapRM<T> dW(weight_.grad.data(), out_, in_);
  dW.noalias() += G.transpose() * X;
  for (std::size_t n = 0; n < batch; ++n) {
    const T* g = grad_out.data() + n * out_;
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += g[o];
  }
  Tensor<T> dx(input_.shape());
  MapRM<T> dX(dx.data(), batch, in_);
  dX.noalias() = G * W;
  return dx;
}

template <typename T>
void Dense<T>::initialize(Rng& rng) {
  init_uniform(weight_.value, in_, rng);
  bias_.value.fill(T{0});
}

// ---- Conv2d ----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t stride)
    : in_c_(in_channels),
      out_c_(out_channels),
      stride_(stride),
      weight_{"weight", Tensor<T>({out_channels, in_channels, kKernel, kKernel}),
              Tensor<T>({out_channels, in_channels, kKernel, kKernel})},
      bias_{"bias", Tensor<T>({out_channels}), Tensor<T>({out_channels})} {
  if (stride != 1 && stride != 2) throw ValidationError("conv2d stride must be 1 or 2");
}

template <typename T>
std::string Conv2d<T>::describe() const {
  return "conv2d(" + std::to_string(in_c_) + "->" + std::to_string(out_c_) + ", 3x3, stride " +
         std::to_string(stride_) + ")";
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& input) const {
  require_rank(input, 3, describe());
  if (input[0] != in_c_) {
    throw ValidationError(describe() + ": channel mismatch, input has " + std::to_string(input[0]));
  }
  if (input[1] + 2 * kPad < kKernel || input[2] + 2 * kPad < kKernel) {
    throw ValidationError(describe() + ": spatial size smaller than the kernel");
  }
  const auto out = [&](std::size_t n) { return (n + 2 * kPad - kKernel) / stride_ + 1; };
  return {out_c_, out(input[1]), out(input[2])};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  require_rank(x.shape(), 4, describe());
  const Shape per = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = per[1], wo = per[2], hw_out = ho * wo, rows = in_c_ * kKernel * kKernel;
  input_shape_ = x.shape();
  // One (rows, Ho*Wo) column block per sample, kept for backward.
  col_.resize(batch * rows * hw_out);
  Tensor<T> y({batch, out_c_, ho, wo});
  ConstMapRM<T> W(weight_.value.data(), out_c_, rows);
  ConstMapVec<T> b(bias_.value.data(), out_c_);
  for (std::size_t n = 0; n < batch; ++n) {
    T* col = col_.data() + n * rows * hw_out;
    im2col(x.data() + n * in_c_ * h * w, in_c_, h, w, stride_, ho, wo, hw_out, col);
    MapRM<T> Y(y.data() + n * out_c_ * hw_out, out_c_, hw_out);
    Y.noalias() = W * ConstMapRM<T>(col, rows, hw_out);
    Y.colwise() += b;
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  if (input_shape_.empty()) throw ValidationError(describe() + ": backward called before forward");
  const std::size_t batch = input_shape_[0], h = input_shape_[2], w = input_shape_[3];
  const Shape per = output_shape({in_c_, h, w});
  const std::size_t ho = per[1], wo = per[2], hw_out = ho * wo, rows = in_c_ * kKernel * kKernel;
  if (grad_out.shape() != Shape{batch, out_c_, ho, wo}) {
    throw ValidationError(describe() + ": upstream gradient shape " + shape_string(grad_out.shape()));
  }
  ConstMapRM<T> W(weight_.value.data(), out_c_, rows);
  MapRM<T> dW(weight_.grad.data(), out_c_, rows);
  scratch_.resize(rows * hw_out);
  MapRM<T> dC(scratch_.data(), rows, hw_out);
  Tensor<T> dx(input_shape_);
  for (std::size_t n = 0; n < batch; ++n) {
    ConstMapRM<T> C(col_.data() + n * rows * hw_out, rows, hw_out);
    ConstMapRM<T> G(grad_out.data() + n * out_c_ * hw_out, out_c_, hw_out);
    dW.noalias() += G * C.transpose();
    for (std::size_t o = 0; o < out_c_; ++o) {
      const T* g = grad_out.data() + (n * out_c_ + o) * hw_out;
      T acc = T(0);
      for (std::size_t i = 0; i < hw_out; ++i) acc += g[i];
      bias_.grad[o] += acc;
    }
    dC.noalias() = W.transpose() * G;
    col2im(scratch_.data(), in_c_, h, w, stride_, ho, wo, hw_out, dx.data() + n * in_c_ * h * w);
  }
  return dx;
}

template <typename T>
void Conv2d<T>::initialize(Rng& rng) {
  init_uniform(weight_.value, in_c_ * kKernel * kKernel, rng);
  bias_.value.fill(T{0});
}

// ---- MaxPool2x2 ------------------------------------------------------------

template <typename T>
Shape MaxPool2x2<T>::output_shape(const Shape& input) const {
  require_rank(input, 3, "maxpool2x2");
  if (input[1] % 2 != 0 || input[2] % 2 != 0) {
    throw ValidationError("maxpool2x2 requires even spatial dims, got " + shape_string(input));
  }
  return {input[0], input[1] / 2, input[2] / 2};
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "maxpool2x2");
  const Shape per = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = per[1], wo = per[2];
  input_shape_ = x.shape();
  Tensor<T> y({x.dim(0), per[0], ho, wo});
  argmax_.resize(y.size());
  std::size_t out = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++out) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        argmax_[out] = best;
        y[out] = x[best];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& grad_out) {
  if (input_shape_.empty()) throw ValidationError("maxpool2x2: backward called before forward");
  if (grad_out.size() != argmax_.size()) {
    throw ValidationError("maxpool2x2: upstream gradient shape " + shape_string(grad_out.shape()));
  }
  Tensor<T> dx(input_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i) dx[argmax_[i]] += grad_out[i];
  return dx;
}

// ---- Upsample2x2 -----------------------------------------------------------

template <typename T>
Shape Upsample2x2<T>::output_shape(const Shape& input) const {
  require_rank(input, 3, "upsample2x2");
  return {input[0], input[1] * 2, input[2] * 2};
}

template <typename T>
Tensor<T> Upsample2x2<T>::forward(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "upsample2x2");
  input_shape_ = x.shape();
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = y.data() + p * 4 * h * w;
    for (std::size_t iy = 0; iy < h; ++iy) {
      T* r0 = dst + (2 * iy) * 2 * w;
      T* r1 = r0 + 2 * w;
      for (std::size_t ix = 0; ix < w; ++ix) {
        const T v = src[iy * w + ix];
        r0[2 * ix] = r0[2 * ix + 1] = r1[2 * ix] = r1[2 * ix + 1] = v;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Upsample2x2<T>::backward(const Tensor<T>& grad_out) {
  if (input_shape_.empty()) throw ValidationError("upsample2x2: backward called before forward");
  const std::size_t planes = input_shape_[0] * input_shape_[1], h = input_shape_[2], w = input_shape_[3];
  if (grad_out.size() != planes * 4 * h * w) {
    throw ValidationError("upsample2x2: upstream gradient shape " + shape_string(grad_out.shape()));
  }
  Tensor<T> dx(input_shape_);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = grad_out.data() + p * 4 * h * w;
    T* dst = dx.data() + p * h * w;
    for (std::size_t iy = 0; iy < h; ++iy) {
      const T* r0 = src + (2 * iy) * 2 * w;
      const T* r1 = r0 + 2 * w;
      for (std::size_t ix = 0; ix < w; ++ix) {
        dst[iy * w + ix] = r0[2 * ix] + r0[2 * ix + 1] + r1[2 * ix] + r1[2 * ix + 1];
      }
    }
  }
  return dx;
}

// ---- Activation ------------------------------------------------------------

template <typename T>
std::string ActivationLayer<T>::describe() const {
  return to_string(fn_);
}

template <typename T>
Tensor<T> ActivationLayer<T>::forward(const Tensor<T>& x) {
  output_ = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) output_[i] = apply_activation(fn_, x[i]);
  return output_;
}

template <typename T>
Tensor<T> ActivationLayer<T>::backward(const Tensor<T>& grad_out) {
  if (output_.empty()) throw ValidationError(describe() + ": backward called before forward");
  output_.require_same_shape(grad_out, describe().c_str());
  Tensor<T> dx(grad_out.shape());
  slope_product(fn_, output_.data(), grad_out.data(), dx.data(), dx.size());
  return dx;
}

// ---- Flatten / Reshape -----------------------------------------------------

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.stride0()});
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad_out) {
  if (input_shape_.empty()) throw ValidationError("flatten: backward called before forward");
  return grad_out.reshaped(input_shape_);
}

template <typename T>
Shape Reshape<T>::output_shape(const Shape& input) const {
  if (shape_size(input) != shape_size(target_)) {
    throw ValidationError(describe() + " cannot take input " + shape_string(input));
  }
  return target_;
}

template <typename T>
Tensor<T> Reshape<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  Shape out{x.dim(0)};
  out.insert(out.end(), target_.begin(), target_.end());
  return x.reshaped(std::move(out));
}

template <typename T>
Tensor<T> Reshape<T>::backward(const Tensor<T>& grad_out) {
  if (input_shape_.empty()) throw ValidationError("reshape: backward called before forward");
  return grad_out.reshaped(input_shape_);
}

#define VARGAN_INSTANTIATE_LAYERS(T)                        \
  template Tensor<T> activation<T>(Activation, const Tensor<T>&); \
  template class Dense<T>;                                  \
  template class Conv2d<T>;                                 \
  template class MaxPool2x2<T>;                             \
  template class Upsample2x2<T>;                            \
  template class ActivationLayer<T>;                        \
  template class Flatten<T>;                                \
  template class Reshape<T>;

VARGAN_INSTANTIATE_LAYERS(float)
VARGAN_INSTANTIATE_LAYERS(double)

}  // namespace vargan::nn

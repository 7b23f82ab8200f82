#include "vargan/architectures.hpp"

#include <sstream>

namespace vargan::arch {

using nn::Activation;
using nn::ActivationLayer;
using nn::Conv2d;
using nn::Dense;
using nn::Net;

std::size_t ArchConfig::upsample_stages() const {
  std::size_t stages = 0;
  for (std::size_t s = seed_size; s < image_size; s *= 2) ++stages;
  return stages;
}

std::size_t ArchConfig::encoder_final_size() const {
  std::size_t s = image_size;
  for (std::size_t i = 0; i + 1 < encoder_channels.size(); ++i) s /= 2;
  return s;
}

void ArchConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("invalid architecture config: " + msg); };
  if (image_size == 0 || image_channels == 0 || latent_dim == 0 || landmark_count == 0 || seed_size == 0 ||
      decoder_channels == 0 || code_dim == 0 || regressor_channels == 0 || regressor_hidden == 0) {
    fail("all sizes must be positive");
  }
  if (image_size % 4 != 0) fail("image_size " + std::to_string(image_size) + " is not divisible by 4");
  if (seed_size << upsample_stages() != image_size) {
    fail("image_size " + std::to_string(image_size) + " is not reachable by doubling seed_size " +
         std::to_string(seed_size));
  }
  if (encoder_channels.empty()) fail("encoder_channels is empty");
  for (auto c : encoder_channels) {
    if (c == 0) fail("encoder channel widths must be positive");
  }
  std::size_t s = image_size;
  for (std::size_t i = 0; i + 1 < encoder_channels.size(); ++i) {
    if (s % 2 != 0 || s < 2) fail("encoder downsampling underflows the spatial size");
    s /= 2;
  }
}

ArchConfig ArchConfig::reference_scale() {
  ArchConfig cfg;
  cfg.image_size = 48;
  cfg.image_channels = 3;
  cfg.latent_dim = 128;
  cfg.landmark_count = 49;
  cfg.seed_size = 6;
  cfg.decoder_channels = 64;
  cfg.encoder_channels = {64, 128, 192, 256};
  cfg.code_dim = 128;
  cfg.regressor_channels = 64;
  cfg.regressor_hidden = 1024;
  cfg.generator_sigmoid = false;
  return cfg;
}

std::string canonical_string(const ArchConfig& cfg) {
  std::ostringstream out;
  out << "image_size=" << cfg.image_size << ";image_channels=" << cfg.image_channels
      << ";latent_dim=" << cfg.latent_dim << ";landmarks=" << cfg.landmark_count << ";seed_size=" << cfg.seed_size
      << ";decoder_channels=" << cfg.decoder_channels << ";encoder_channels=";
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) out << (i ? "," : "") << cfg.encoder_channels[i];
  out << ";code_dim=" << cfg.code_dim << ";regressor_channels=" << cfg.regressor_channels
      << ";regressor_hidden=" << cfg.regressor_hidden << ";conditional=" << cfg.conditional
      << ";generator_sigmoid=" << cfg.generator_sigmoid;
  return out.str();
}

template <typename T>
Net<T> build_decoder(const ArchConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  const std::size_t c = cfg.decoder_channels, s = cfg.seed_size;
  Net<T> net("decoder", {input_dim});
  net.add("fc", std::make_unique<Dense<T>>(input_dim, c * s * s));
  net.add("reshape", std::make_unique<nn::Reshape<T>>(Shape{c, s, s}));
  const std::size_t stages = cfg.upsample_stages();
  for (std::size_t i = 0; i <= stages; ++i) {
    const std::string p = "s" + std::to_string(i) + ".";
    net.add(p + "conv1", std::make_unique<Conv2d<T>>(c, c));
    net.add(p + "elu1", std::make_unique<ActivationLayer<T>>(Activation::elu));
    net.add(p + "conv2", std::make_unique<Conv2d<T>>(c, c));
    net.add(p + "elu2", std::make_unique<ActivationLayer<T>>(Activation::elu));
    if (i < stages) net.add(p + "up", std::make_unique<nn::Upsample2x2<T>>());
  }
  net.add("out.conv", std::make_unique<Conv2d<T>>(c, cfg.image_channels));
  return net;
}

template <typename T>
Net<T> build_generator(const ArchConfig& cfg) {
  Net<T> net("generator", {cfg.generator_input_dim()});
  net.append(build_decoder<T>(cfg, cfg.generator_input_dim()), "");
  if (cfg.generator_sigmoid) net.add("out.sigmoid", std::make_unique<ActivationLayer<T>>(Activation::sigmoid));
  return net;
}

template <typename T>
Net<T> build_encoder(const ArchConfig& cfg, std::size_t out_dim, OutputActivation out_activation,
                     std::size_t extra_input_channels) {
  cfg.validate();
  if (out_dim == 0) throw ValidationError("encoder output dimension must be positive");
  const std::size_t in_c = cfg.image_channels + extra_input_channels;
  Net<T> net("encoder", {in_c, cfg.image_size, cfg.image_size});
  std::size_t prev = in_c;
  const auto& widths = cfg.encoder_channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "s" + std::to_string(i) + ".";
    const bool downsample = i + 1 < widths.size();
    net.add(p + "conv1", std::make_unique<Conv2d<T>>(prev, widths[i]));
    net.add(p + "elu1", std::make_unique<ActivationLayer<T>>(Activation::elu));
    net.add(p + "conv2", std::make_unique<Conv2d<T>>(widths[i], widths[i], downsample ? 2 : 1));
    net.add(p + "elu2", std::make_unique<ActivationLayer<T>>(Activation::elu));
    prev = widths[i];
  }
  const std::size_t s = cfg.encoder_final_size();
  net.add("flatten", std::make_unique<nn::Flatten<T>>());
  net.add("fc", std::make_unique<Dense<T>>(prev * s * s, out_dim));
  if (out_activation == OutputActivation::tanh) {
    net.add("out.tanh", std::make_unique<ActivationLayer<T>>(Activation::tanh));
  } else if (out_activation == OutputActivation::sigmoid) {
    net.add("out.sigmoid", std::make_unique<ActivationLayer<T>>(Activation::sigmoid));
  }
  return net;
}

template <typename T>
Net<T> build_began_discriminator(const ArchConfig& cfg) {
  Net<T> net("began_discriminator", {cfg.image_channels, cfg.image_size, cfg.image_size});
  net.append(build_encoder<T>(cfg, cfg.code_dim, OutputActivation::none), "enc.");
  net.append(build_decoder<T>(cfg, cfg.code_dim), "dec.");
  return net;
}

template <typename T>
Net<T> build_regressor(const ArchConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.regressor_channels, q = cfg.image_size / 4;
  Net<T> net("regressor", {cfg.image_channels, cfg.image_size, cfg.image_size});
  net.add("hidden1.conv", std::make_unique<Conv2d<T>>(cfg.image_channels, c));
  net.add("hidden1.relu", std::make_unique<ActivationLayer<T>>(Activation::relu));
  net.add("pool1", std::make_unique<nn::MaxPool2x2<T>>());
  net.add("hidden2.conv", std::make_unique<Conv2d<T>>(c, c));
  net.add("hidden2.relu", std::make_unique<ActivationLayer<T>>(Activation::relu));
  net.add("pool2", std::make_unique<nn::MaxPool2x2<T>>());
  net.add("flatten", std::make_unique<nn::Flatten<T>>());
  net.add("hidden3.dense", std::make_unique<Dense<T>>(c * q * q, cfg.regressor_hidden));
  net.add("hidden3.relu", std::make_unique<ActivationLayer<T>>(Activation::relu));
  net.add("output.dense", std::make_unique<Dense<T>>(cfg.regressor_hidden, cfg.target_dim()));
  net.add("output.tanh", std::make_unique<ActivationLayer<T>>(Activation::tanh));
  return net;
}

template <typename T>
Net<T> build_pair_discriminator(const ArchConfig& cfg) {
  Net<T> net = build_encoder<T>(cfg, 1, OutputActivation::sigmoid, cfg.target_dim());
  Net<T> out("pair_discriminator", net.input_shape());
  out.append(net, "");
  return out;
}

template <typename T>
Net<T> build_landmark_encoder(const ArchConfig& cfg) {
  Net<T> net = build_encoder<T>(cfg, cfg.target_dim(), OutputActivation::tanh);
  Net<T> out("landmark_encoder", net.input_shape());
  out.append(net, "");
  return out;
}

template <typename T>
Tensor<T> broadcast_condition(const Tensor<T>& images, const Tensor<T>& targets) {
  if (images.rank() != 4 || targets.rank() != 2 || images.dim(0) != targets.dim(0)) {
    throw ValidationError("broadcast_condition: expected (N,C,H,W) images and (N,D) targets, got " +
                          shape_string(images.shape()) + " and " + shape_string(targets.shape()));
  }
  const std::size_t n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3), d = targets.dim(1);
  Tensor<T> out({n, c + d, images.dim(2), images.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    T* dst = out.data() + b * (c + d) * hw;
    std::copy_n(images.data() + b * c * hw, c * hw, dst);
    for (std::size_t j = 0; j < d; ++j) std::fill_n(dst + (c + j) * hw, hw, targets[b * d + j]);
  }
  return out;
}

template <typename T>
void split_condition_gradient(const Tensor<T>& grad, std::size_t image_channels, Tensor<T>* image_grad,
                              Tensor<T>* target_grad) {
  if (grad.rank() != 4 || grad.dim(1) <= image_channels) {
    throw ValidationError("split_condition_gradient: unexpected gradient shape " + shape_string(grad.shape()));
  }
  const std::size_t n = grad.dim(0), c = image_channels, d = grad.dim(1) - c, hw = grad.dim(2) * grad.dim(3);
  if (image_grad) {
    *image_grad = Tensor<T>({n, c, grad.dim(2), grad.dim(3)});
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(grad.data() + b * (c + d) * hw, c * hw, image_grad->data() + b * c * hw);
    }
  }
  if (target_grad) {
    *target_grad = Tensor<T>({n, d});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t j = 0; j < d; ++j) {
        const T* plane = grad.data() + (b * (c + d) + c + j) * hw;
        T sum{0};
        for (std::size_t i = 0; i < hw; ++i) sum += plane[i];
        (*target_grad)[b * d + j] = sum;
      }
    }
  }
}

#define VARGAN_INSTANTIATE_ARCH(T)                                                                     \
  template Net<T> build_decoder<T>(const ArchConfig&, std::size_t);                                   \
  template Net<T> build_generator<T>(const ArchConfig&);                                              \
  template Net<T> build_encoder<T>(const ArchConfig&, std::size_t, OutputActivation, std::size_t);    \
  template Net<T> build_began_discriminator<T>(const ArchConfig&);                                    \
  template Net<T> build_regressor<T>(const ArchConfig&);                                              \
  template Net<T> build_pair_discriminator<T>(const ArchConfig&);                                     \
  template Net<T> build_landmark_encoder<T>(const ArchConfig&);                                       \
  template Tensor<T> broadcast_condition<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template void split_condition_gradient<T>(const Tensor<T>&, std::size_t, Tensor<T>*, Tensor<T>*);

VARGAN_INSTANTIATE_ARCH(float)
VARGAN_INSTANTIATE_ARCH(double)

}  // namespace vargan::arch

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vargan/net.hpp"

namespace vargan::arch {

enum class OutputActivation { none, tanh, sigmoid };

struct ArchConfig {
  std::size_t image_size = 32;
  std::size_t image_channels = 1;
  std::size_t latent_dim = 64;       // noise part of the generator input
  std::size_t landmark_count = 5;    // L; targets have 2L coordinates
  std::size_t seed_size = 8;         // decoder's initial spatial extent
  std::size_t decoder_channels = 32;
  std::vector<std::size_t> encoder_channels = {32, 64, 96};
  std::size_t code_dim = 64;         // BEGAN autoencoder bottleneck
  std::size_t regressor_channels = 64;
  std::size_t regressor_hidden = 1024;
  bool conditional = true;           // generator input is [z ; y]
  bool generator_sigmoid = true;     // squash generator pixels into (0, 1)

  std::size_t target_dim() const { return 2 * landmark_count; }
  std::size_t generator_input_dim() const { return latent_dim + (conditional ? target_dim() : 0); }
  std::size_t upsample_stages() const;
  // Spatial size entering the encoder's dense layer.
  std::size_t encoder_final_size() const;

  // Throws ValidationError describing the first violated constraint.
  void validate() const;

  // 48x48 RGB, k = 128, 49 landmarks, 64-channel decoder, 64/128/192/256 encoder.
  static ArchConfig reference_scale();
};

// Stable textual form used for config digests.
std::string canonical_string(const ArchConfig& cfg);

// Dense projection to a (C, seed, seed) volume, then pairs of 3x3 ELU convs with
// 2x nearest-neighbour upsampling between resolutions, closed by a 3x3 conv with
// no nonlinearity producing (image_channels, image_size, image_size).
template <typename T>
nn::Net<T> build_decoder(const ArchConfig& cfg, std::size_t input_dim);

// The decoder fed with [z ; y] (or z alone when unconditional), followed by a
// sigmoid when cfg.generator_sigmoid is set.
template <typename T>
nn::Net<T> build_generator(const ArchConfig& cfg);

// Stages of two 3x3 ELU convs, the second strided by 2 except in the last
// stage, channel widths from cfg.encoder_channels, then a dense layer to
// out_dim with the requested activation. extra_input_channels are appended to
// the image channels (cBiGAN condition planes).
template <typename T>
nn::Net<T> build_encoder(const ArchConfig& cfg, std::size_t out_dim, OutputActivation out_activation,
                         std::size_t extra_input_channels = 0);

// Autoencoder: encoder(code_dim, none) followed by an unconditioned decoder.
template <typename T>
nn::Net<T> build_began_discriminator(const ArchConfig& cfg);

// conv3x3(64) ReLU, maxpool, conv3x3(64) ReLU, maxpool, dense(1024) ReLU, dense(2L) tanh.
template <typename T>
nn::Net<T> build_regressor(const ArchConfig& cfg);

// cBiGAN roles.
template <typename T>
nn::Net<T> build_pair_discriminator(const ArchConfig& cfg);
template <typename T>
nn::Net<T> build_landmark_encoder(const ArchConfig& cfg);

// Stacks each target coordinate as a constant plane after the image channels:
// (N, C, H, W) + (N, D) -> (N, C + D, H, W).
template <typename T>
Tensor<T> broadcast_condition(const Tensor<T>& images, const Tensor<T>& targets);

// Splits the gradient of a broadcast_condition() input back into image and
// target parts; target gradients sum over their planes.
template <typename T>
void split_condition_gradient(const Tensor<T>& grad, std::size_t image_channels, Tensor<T>* image_grad,
                              Tensor<T>* target_grad);

}  // namespace vargan::arch

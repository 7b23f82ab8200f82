#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vargan/rng.hpp"
#include "vargan/tensor.hpp"

namespace vargan::synth {

// Normalized landmark coordinate in [-1, 1]^2; y grows downwards.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct FaceParams {
  Point left_eye, right_eye, nose, mouth_left, mouth_right;
  double eye_radius = 2.0;       // pixels
  double nose_radius = 1.5;      // pixels
  double mouth_thickness = 1.5;  // pixels
  double foreground = 1.0;
  double background = 0.0;
  double noise_amplitude = 0.0;  // standard deviation of additive pixel noise
  std::uint64_t noise_seed = 0;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Uniform sampling ranges. Coordinates are normalized; radii are pixels at a
// 32-pixel canvas and scale linearly with image_size.
struct SynthRanges {
  Range left_eye_x{-0.6, -0.25}, left_eye_y{-0.5, -0.2};
  Range right_eye_x{0.25, 0.6}, right_eye_y{-0.5, -0.2};
  Range nose_x{-0.12, 0.12}, nose_y{0.0, 0.25};
  Range mouth_left_x{-0.5, -0.15}, mouth_left_y{0.4, 0.7};
  Range mouth_right_x{0.15, 0.5}, mouth_right_y{0.4, 0.7};
  Range eye_radius{1.5, 2.5};
  Range nose_radius{1.0, 1.75};
  Range mouth_thickness{1.0, 2.0};
  Range foreground{0.7, 1.0};
  Range background{0.0, 0.25};

  // name -> range, in a fixed order (used by the manifest).
  std::vector<std::pair<std::string, Range>> named() const;
};

struct SynthConfig {
  std::size_t image_size = 32;
  std::size_t landmark_count = 5;
  double noise_amplitude = 0.03;
  std::size_t max_retries = 10000;
  SynthRanges ranges;

  void validate() const;
};

inline constexpr std::size_t kLandmarks = 5;
inline constexpr std::array<const char*, 2 * kLandmarks> kTargetNames = {
    "left_eye.x",   "left_eye.y",   "right_eye.x",  "right_eye.y",  "nose.x",
    "nose.y",       "mouth_left.x", "mouth_left.y", "mouth_right.x", "mouth_right.y"};

// Normalized coordinate -> pixel coordinate: (v + 1) / 2 * (size - 1).
double to_pixel(double v, std::size_t image_size);
double to_normalized(double px, std::size_t image_size);

// Empty string if `p` satisfies every invariant at this canvas size, otherwise
// a description of the first violation.
std::string check_invariants(const FaceParams& p, std::size_t image_size);

// Rejection-samples until the invariants hold; throws ValidationError once
// cfg.max_retries draws have failed.
FaceParams sample_face_params(Rng& rng, const SynthConfig& cfg);

// Grayscale raster in [0, 1], row-major, image_size^2 values. Discs for eyes and
// nose, a thick segment for the mouth, with one-pixel linear edge falloff.
std::vector<double> render_face(const FaceParams& params, std::size_t image_size);

std::vector<std::uint8_t> quantize(std::span<const double> pixels);

// Landmark vector in kTargetNames order.
std::vector<double> landmark_target(const FaceParams& params);

struct DatasetRecord {
  std::vector<std::uint8_t> pixels;
  std::vector<double> target;  // rounded to 6 fractional digits
  std::uint64_t seed = 0;      // per-record generation seed
};

struct Dataset {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t image_size() const { return config.image_size; }
  std::size_t target_dim() const { return 2 * config.landmark_count; }

  // Copies the selected records into (N, 1, S, S) images in [0, 1] and (N, 2L) targets.
  template <typename T>
  void batch(std::span<const std::size_t> indices, Tensor<T>& images, Tensor<T>& targets) const;
};

// Per-record seeds are mix_seed(seed, index); the dataset is a pure function of (n, cfg, seed).
DatasetRecord generate_record(const SynthConfig& cfg, std::uint64_t dataset_seed, std::size_t index);
Dataset generate_dataset(std::size_t n, const SynthConfig& cfg, std::uint64_t seed);

// Directory layout: manifest, images.bin, targets.csv.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// FNV-1a over images.bin followed by targets.csv as written to disk.
std::string dataset_digest(const Dataset& data);

std::string targets_csv(const Dataset& data);
// Parses rows in targets.csv format (header required).
std::vector<std::vector<double>> read_targets_csv(const std::filesystem::path& path, std::size_t expected_dim);

// Uniform noise in [-1, 1).
template <typename T>
Tensor<T> sample_latent(Rng& rng, std::size_t latent_dim, std::size_t batch);

// [z ; y] per batch element, z leading.
template <typename T>
Tensor<T> make_condition_input(const Tensor<T>& z, const Tensor<T>& y);

// Binary PGM (P5), 8-bit. Comments are written as "# " lines after the magic.
void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::size_t width,
               std::size_t height, std::span<const std::string> comments = {});
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& width, std::size_t& height);

}  // namespace vargan::synth

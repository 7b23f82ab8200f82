#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vargan/net.hpp"
#include "vargan/synth.hpp"
#include "vargan/training.hpp"

namespace vargan::eval {

using Points = std::vector<std::vector<double>>;

struct OracleConfig {
  double holdout_fraction = 0.2;
  std::size_t batch = 32;
  std::size_t max_steps = 8000;
  std::size_t check_every = 250;
  double lr = 1e-3;
  double target_error = 0.05;  // epsilon_oracle, normalized units
  double stop_error = 0.025;   // training stops early once the holdout error is below this
  std::uint64_t seed = 1;
  std::size_t channels = 64;
  std::size_t hidden = 1024;
  std::size_t feature_dims = 2;
  bool permute_targets = false;  // negative control: shuffle targets across images

  void validate() const;
};

// Independent measurement network: the regressor architecture trained with MSE
// on genuine data only, plus a whitened PCA projection of its penultimate layer.
struct Oracle {
  nn::Net<float> net{"oracle", {1, 1, 1}};
  std::size_t image_size = 0;
  std::size_t landmark_count = 0;
  std::string dataset_digest;
  double holdout_error = 0.0;
  double train_error = 0.0;
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
  std::size_t steps = 0;
  bool reached_target = false;
  double target_error = 0.0;
  std::vector<double> feature_mean;   // hidden
  std::vector<double> feature_basis;  // feature_dims x hidden, rows scaled to unit variance
  std::size_t feature_dims = 0;

  Tensor<float> predict(const Tensor<float>& images);
  // Whitened PCA coordinates of the penultimate (hidden3.relu) activations.
  Points features(const Tensor<float>& images);
  // Describes the feature space for reports.
  std::string feature_space() const;
};

inline constexpr const char* kFeatureLayer = "hidden3.relu";

Oracle train_oracle(const synth::Dataset& data, const OracleConfig& cfg);
void save_oracle(const Oracle& oracle, const std::filesystem::path& path);
Oracle load_oracle(const std::filesystem::path& path);

// Deterministic split: holdout indices are the last fraction of a seeded permutation.
void split_indices(std::size_t n, double holdout_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& holdout);

// Per sample, the mean Euclidean distance over landmarks between predicted and
// requested (x, y) pairs; averaged over samples. Inputs are (N, 2L).
double mean_landmark_error(const Tensor<float>& predicted, const Tensor<float>& target);

// Oracle error on the given dataset records.
double oracle_error(Oracle& oracle, const synth::Dataset& data, const std::vector<std::size_t>& indices);

// Produces one image per row of `targets` (N, 2L) as (N, 1, S, S) in [0, 1].
using SampleSource = std::function<Tensor<float>(const Tensor<float>& targets, Rng& rng)>;

// Samples a trained generator. Unconditional generators ignore the targets.
SampleSource generator_source(const train::TrainingState& state);

// Renders faces with exactly the requested landmarks and randomly drawn
// radii, intensities and noise: the upper-bound calibration generator.
SampleSource renderer_source(const synth::SynthConfig& cfg);

// Mean landmark error between oracle(source(y)) and y over n_per_target samples per target.
double landmark_fidelity(const SampleSource& source, Oracle& oracle, const Points& targets, std::size_t n_per_target,
                         std::uint64_t seed);

// Mean over unordered pairs of |a - b|^2 / P for flattened images of P pixels.
// Zero iff all samples are identical; two images differing by 1 everywhere give 1.
double diversity_score(const Tensor<float>& samples);

// Kozachenko-Leonenko estimate in nats, Euclidean k-th neighbour distances:
//   H = psi(n) - psi(k) + log V_d + (d / n) sum_i log eps_i
// Zero distances trigger a seeded jitter of 1e-9 times the data scale and a warning.
double knn_entropy(const Points& samples, std::size_t k, std::uint64_t jitter_seed = 0);

// Histogram JSD in nats over the joint bounding box of both sets, `bins` per dimension.
double sample_set_jsd(const Points& a, const Points& b, std::size_t bins);

// Tiles images into rows of `cols` with 1-pixel white separators; binary PGM.
std::vector<std::uint8_t> grid_pixels(const std::vector<std::vector<std::uint8_t>>& images, std::size_t size,
                                      std::size_t cols, std::size_t& width, std::size_t& height);
void emit_grid(const Tensor<float>& samples, std::size_t cols, const std::filesystem::path& path,
               std::span<const std::string> comments = {});

struct EvalSpec {
  std::size_t targets = 8;       // distinct requested landmark sets
  std::size_t per_target = 128;  // samples per target
  std::size_t knn_k = 3;
  std::size_t bins = 8;          // histogram bins per feature dimension

  void validate() const;
};

struct EvalReport {
  std::string model;
  std::uint64_t seed = 0;
  double fidelity = 0.0;     // mean landmark error, normalized units
  double diversity = 0.0;    // mean over targets of diversity_score
  double entropy = 0.0;      // mean over targets of knn_entropy in feature space
  double separation = 0.0;   // mean JSD between feature sets of paired targets
  std::size_t targets = 0;
  std::size_t per_target = 0;
  std::size_t samples = 0;
  std::string feature_space;
  std::string dataset_digest;
  EvalSpec spec;

  std::string to_text() const;
};

// `count` dataset targets drawn without replacement from a seeded permutation.
Points pick_targets(const synth::Dataset& data, std::size_t count, std::uint64_t seed);

EvalReport evaluate(const SampleSource& source, Oracle& oracle, const synth::Dataset& data, const EvalSpec& spec,
                    std::uint64_t seed, const std::string& model);

struct ModelRuns {
  std::string name;                           // vargan, cbigan, began
  std::vector<train::TrainingState> states;   // one per seed, or a single state reused for every seed
};

struct Verdict {
  std::string metric;
  bool lower_is_better = false;
  std::uint64_t seed = 0;
  std::vector<double> values;  // per model, in ModelRuns order
  std::string winner;          // model name or "tie"
};

struct CompareReport {
  std::vector<std::string> models;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<EvalReport>> reports;  // [model][seed]
  std::vector<Verdict> verdicts;                 // per metric and seed, plus one "majority" row per metric

  // Fraction of seeds where `metric` for model a beats model b.
  std::size_t wins(const std::string& metric, const std::string& a, const std::string& b) const;
  double value(const std::string& model, std::size_t seed_index, const std::string& metric) const;
  std::string verdict_csv() const;
  std::string to_text() const;
};

// Relative tolerance under which two metric values count as a tie.
inline constexpr double kTieTolerance = 1e-12;

CompareReport compare_report(const std::vector<ModelRuns>& models, Oracle& oracle, const synth::Dataset& data,
                             const std::vector<std::uint64_t>& seeds, const EvalSpec& spec);

}  // namespace vargan::eval

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vargan/architectures.hpp"
#include "vargan/losses.hpp"
#include "vargan/optimizer.hpp"
#include "vargan/synth.hpp"

namespace vargan::train {

// began is the unconditional BEGAN baseline: generator sees z only, no regressor.
enum class Method { vargan, cbigan, began };

std::string to_string(Method m);
Method parse_method(const std::string& text);

struct TrainerConfig {
  Method method = Method::vargan;
  arch::ArchConfig arch;
  loss::VarganHyper vargan;
  loss::CbiganHyper cbigan;
  std::size_t batch = 16;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  nn::AdamSettings adam_generator;
  nn::AdamSettings adam_discriminator;
  nn::AdamSettings adam_encoder;
  nn::NesterovSettings nesterov_regressor;
  double real_mix = 0.5;           // weight of genuine pairs in the regressor's loss
  std::size_t checkpoint_every = 0; // 0: final checkpoint only
  std::string data;

  void validate() const;

  // Flat key=value form; keys mirror the CLI flags of `train`.
  std::map<std::string, std::string> to_kv() const;
  // Applies recognised keys on top of *this; throws ValidationError on unknown keys or bad values.
  void apply_kv(const std::map<std::string, std::string>& kv);

  // Digest of everything that shapes the model and its training trajectory.
  // Excludes steps, checkpoint cadence and the data path.
  std::string digest() const;
};

// Keys accepted by TrainerConfig::apply_kv, in to_kv order.
std::vector<std::string> config_keys();

// Parses "key=value" lines; '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);

struct TelemetryRow {
  std::uint64_t step = 0;
  std::array<double, 3> losses{};
  double k = 0.0;
  double wall_ms = 0.0;
};

// Loss column names for a method: L_d, L_g, L_R / L_D, L_G, L_E / L_d, L_g, L_x.
std::array<std::string, 3> loss_names(Method m);

struct Role {
  std::string name;  // G, D, R or E
  nn::Net<float> net;
  nn::Optimizer<float> optimizer;
};

struct TrainingState {
  TrainerConfig config;
  std::string dataset_digest;
  std::uint64_t step = 0;
  double k = 0.0;
  std::vector<Role> roles;
  Rng rng;
  std::vector<TelemetryRow> telemetry;

  Role& role(const std::string& name);
  const Role& role(const std::string& name) const;
  bool has_role(const std::string& name) const;
};

// Builds and initializes networks for the configured method. The dataset
// fixes image size and landmark count.
TrainingState init_state(const TrainerConfig& config, const synth::Dataset& data);

// Rebuilds the configured architecture with the dataset's image size and landmark count.
arch::ArchConfig effective_arch(const TrainerConfig& config, std::size_t image_size, std::size_t landmark_count);

struct Batch {
  Tensor<float> images;
  Tensor<float> targets;
};

// Uniform draw with replacement from the state's RNG.
Batch draw_batch(TrainingState& state, const synth::Dataset& data);

// Losses after the step in loss_names order.
std::array<double, 3> vargan_step(TrainingState& state, const Batch& batch);
std::array<double, 3> cbigan_step(TrainingState& state, const Batch& batch);

// Draws a batch and dispatches on the method; appends telemetry.
void step(TrainingState& state, const synth::Dataset& data);

// Per-substep objectives. Each returns the objective value and accumulates
// parameter gradients of the network being optimized; other networks' parameter
// gradients are left dirty and must be ignored. Inputs of other roles are treated
// as constants.

struct DiscriminatorTerms {
  double total = 0.0;  // L(x) - k L(G(z|y))
  double real = 0.0;   // L(x)
  double fake = 0.0;   // L(G(z|y))
};

// Gradient into D.
template <typename T>
DiscriminatorTerms discriminator_objective(nn::Net<T>& D, const Tensor<T>& x, const Tensor<T>& generated, double k);

// real_mix * L_R(x, y) + (1 - real_mix) * L_R(G(z|y), y), gradient into R.
template <typename T>
double regressor_objective(nn::Net<T>& R, const Tensor<T>& x, const Tensor<T>& generated, const Tensor<T>& y,
                           double real_mix, double log_floor);

struct GeneratorTerms {
  double total = 0.0;
  double reconstruction = 0.0;  // L(G(z|y))
  double regression = 0.0;      // L_R on generated pairs
};

// adv_weight * L(G(z|y)) + reg_weight * L_R(G(z|y), y), gradient into G.
// R may be null, in which case reg_weight must be 0.
template <typename T>
GeneratorTerms generator_objective(nn::Net<T>& G, nn::Net<T>& D, nn::Net<T>* R, const Tensor<T>& generator_input,
                                   const Tensor<T>& y, double adv_weight, double reg_weight, double log_floor);

// -(log p_r + log(1 - p_I) + log(1 - p_s)), gradient into the pair discriminator.
template <typename T>
double cbigan_discriminator_objective(nn::Net<T>& D, const Tensor<T>& x, const Tensor<T>& y,
                                      const Tensor<T>& generated, const Tensor<T>& encoded, double log_floor);

// -log p_I, gradient into G.
template <typename T>
double cbigan_generator_objective(nn::Net<T>& G, nn::Net<T>& D, const Tensor<T>& generator_input,
                                  const Tensor<T>& y, double log_floor);

struct EncoderTerms {
  double total = 0.0;    // -log p_s + penalty
  double log_p = 0.0;    // mean log p_s
  double penalty = 0.0;  // theta * mean((s - y)^2)
};

// Gradient into E.
template <typename T>
EncoderTerms cbigan_encoder_objective(nn::Net<T>& E, nn::Net<T>& D, const Tensor<T>& x, const Tensor<T>& y,
                                double theta, double log_floor);

// Checkpoint: "VGCK", format version, config digest, dataset digest, config
// key=value text, step, k, RNG state, then named float64 tensors (parameters,
// optimizer moments, telemetry).
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);
// Rejects a checkpoint whose config digest differs from `expected`.
TrainingState load_checkpoint(const std::filesystem::path& path, const TrainerConfig& expected);

// Telemetry CSV: "# key=value" config lines, then header and one row per step.
std::string telemetry_csv(const TrainingState& state);
// Digest of the telemetry rows without wall_ms.
std::string telemetry_digest(const TrainingState& state);
// Digest of all parameters, moments, k, step and RNG state.
std::string state_digest(const TrainingState& state);

struct TrainOptions {
  std::filesystem::path out;                 // telemetry.csv, checkpoints
  std::optional<std::filesystem::path> resume;
  std::size_t stop_after = 0;                // stop at this step (0: config.steps); for resume tests
};

// Runs the configured stepper up to config.steps. On a non-finite loss the
// telemetry gathered so far is written before the error propagates.
TrainingState train(const TrainerConfig& config, const synth::Dataset& data, const TrainOptions& options);

}  // namespace vargan::train

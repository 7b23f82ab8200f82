#include "vargan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "vargan/digest.hpp"
#include "vargan/error.hpp"
#include "vargan/log.hpp"

namespace vargan::train {

using nn::Net;

using binio::Reader;
using binio::Writer;

namespace {

constexpr char kMagic[4] = {'V', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ValidationError("config key '" + key + "': not a number: '" + text + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw ValidationError("config key '" + key + "': not a non-negative integer: '" + text + "'");
  }
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': integer out of range: '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_uint(key, item));
  if (out.empty()) throw ValidationError("config key '" + key + "': empty list");
  return out;
}

void require_finite_losses(const std::array<double, 3>& losses, Method m, std::uint64_t step) {
  const auto names = loss_names(m);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << ":";
      for (std::size_t j = 0; j < losses.size(); ++j) msg << ' ' << names[j] << '=' << losses[j];
      throw NonFiniteError(msg.str());
    }
  }
}

template <typename T>
void axpy(Tensor<T>& y, double a, const Tensor<T>& x) {
  y.require_same_shape(x, "axpy");
  const T s = static_cast<T>(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& x, double a) {
  Tensor<T> out = x;
  out *= static_cast<T>(a);
  return out;
}

std::string kv_text(const TrainingState& state) {
  std::string text;
  for (const auto& [k, v] : state.config.to_kv()) text += k + "=" + v + "\n";
  text += "image-size=" + std::to_string(state.config.arch.image_size) + "\n";
  text += "landmarks=" + std::to_string(state.config.arch.landmark_count) + "\n";
  return text;
}

// Builds untrained (zero-initialized) roles for an effective config.
std::vector<Role> build_roles(const TrainerConfig& cfg) {
  const auto& a = cfg.arch;
  std::vector<Role> roles;
  auto add = [&](std::string name, Net<float> net, nn::OptimizerRule rule) {
    nn::Optimizer<float> opt(rule, net);
    roles.push_back(Role{std::move(name), std::move(net), std::move(opt)});
  };
  add("G", arch::build_generator<float>(a), cfg.adam_generator);
  if (cfg.method == Method::cbigan) {
    add("D", arch::build_pair_discriminator<float>(a), cfg.adam_discriminator);
    add("E", arch::build_landmark_encoder<float>(a), cfg.adam_encoder);
  } else {
    add("D", arch::build_began_discriminator<float>(a), cfg.adam_discriminator);
    if (cfg.method == Method::vargan) add("R", arch::build_regressor<float>(a), cfg.nesterov_regressor);
  }
  return roles;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::vargan: return "vargan";
    case Method::cbigan: return "cbigan";
    case Method::began: return "began";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  if (text == "vargan") return Method::vargan;
  if (text == "cbigan") return Method::cbigan;
  if (text == "began") return Method::began;
  throw ValidationError("unknown method '" + text + "' (expected vargan, cbigan or began)");
}

std::array<std::string, 3> loss_names(Method m) {
  switch (m) {
    case Method::vargan: return {"L_d", "L_g", "L_R"};
    case Method::cbigan: return {"L_D", "L_G", "L_E"};
    case Method::began: return {"L_d", "L_g", "L_x"};
  }
  return {};
}

void TrainerConfig::validate() const {
  if (batch == 0) throw ValidationError("batch must be positive");
  if (steps == 0) throw ValidationError("steps must be positive");
  if (!(real_mix >= 0.0 && real_mix <= 1.0)) throw ValidationError("real-mix must lie in [0, 1]");
  for (const auto* adam : {&adam_generator, &adam_discriminator, &adam_encoder}) {
    if (!(adam->lr > 0.0)) throw ValidationError("Adam learning rates must be positive");
    if (!(adam->beta1 >= 0.0 && adam->beta1 < 1.0 && adam->beta2 >= 0.0 && adam->beta2 < 1.0)) {
      throw ValidationError("Adam betas must lie in [0, 1)");
    }
  }
  if (!(nesterov_regressor.lr > 0.0)) throw ValidationError("lr-r must be positive");
  if (!(nesterov_regressor.momentum >= 0.0 && nesterov_regressor.momentum < 1.0)) {
    throw ValidationError("momentum-r must lie in [0, 1)");
  }
  vargan.validate();
  cbigan.validate();
  arch::ArchConfig a = arch;
  a.conditional = method != Method::began;
  a.validate();
}

std::vector<std::string> config_keys() {
  return {"method",        "steps",         "batch",       "seed",       "data",
          "checkpoint-every", "latent-dim", "seed-size",   "decoder-channels", "encoder-channels",
          "code-dim",      "regressor-channels", "regressor-hidden", "generator-sigmoid", "gamma",
          "adv-weight",    "reg-weight",    "lambda-k",    "log-floor",  "theta",
          "real-mix",      "lr-g",          "lr-d",        "lr-e",       "beta1",
          "beta2",         "lr-r",          "momentum-r"};
}

std::map<std::string, std::string> TrainerConfig::to_kv() const {
  std::string channels;
  for (std::size_t i = 0; i < arch.encoder_channels.size(); ++i) {
    channels += (i ? "," : "") + std::to_string(arch.encoder_channels[i]);
  }
  return {{"method", to_string(method)},
          {"steps", std::to_string(steps)},
          {"batch", std::to_string(batch)},
          {"seed", std::to_string(seed)},
          {"data", data},
          {"checkpoint-every", std::to_string(checkpoint_every)},
          {"latent-dim", std::to_string(arch.latent_dim)},
          {"seed-size", std::to_string(arch.seed_size)},
          {"decoder-channels", std::to_string(arch.decoder_channels)},
          {"encoder-channels", channels},
          {"code-dim", std::to_string(arch.code_dim)},
          {"regressor-channels", std::to_string(arch.regressor_channels)},
          {"regressor-hidden", std::to_string(arch.regressor_hidden)},
          {"generator-sigmoid", arch.generator_sigmoid ? "true" : "false"},
          {"gamma", fmt_double(vargan.gamma)},
          {"adv-weight", fmt_double(vargan.adv_weight)},
          {"reg-weight", fmt_double(vargan.reg_weight)},
          {"lambda-k", fmt_double(vargan.lambda_k)},
          {"log-floor", fmt_double(vargan.log_floor)},
          {"theta", fmt_double(cbigan.theta)},
          {"real-mix", fmt_double(real_mix)},
          {"lr-g", fmt_double(adam_generator.lr)},
          {"lr-d", fmt_double(adam_discriminator.lr)},
          {"lr-e", fmt_double(adam_encoder.lr)},
          {"beta1", fmt_double(adam_generator.beta1)},
          {"beta2", fmt_double(adam_generator.beta2)},
          {"lr-r", fmt_double(nesterov_regressor.lr)},
          {"momentum-r", fmt_double(nesterov_regressor.momentum)}};
}

void TrainerConfig::apply_kv(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "method") {
      method = parse_method(value);
      arch.conditional = method != Method::began;
    } else if (key == "steps") steps = parse_uint(key, value);
    else if (key == "batch") batch = parse_uint(key, value);
    else if (key == "seed") seed = parse_uint(key, value);
    else if (key == "data") data = value;
    else if (key == "checkpoint-every") checkpoint_every = parse_uint(key, value);
    else if (key == "latent-dim") arch.latent_dim = parse_uint(key, value);
    else if (key == "seed-size") arch.seed_size = parse_uint(key, value);
    else if (key == "decoder-channels") arch.decoder_channels = parse_uint(key, value);
    else if (key == "encoder-channels") arch.encoder_channels = parse_list(key, value);
    else if (key == "code-dim") arch.code_dim = parse_uint(key, value);
    else if (key == "regressor-channels") arch.regressor_channels = parse_uint(key, value);
    else if (key == "regressor-hidden") arch.regressor_hidden = parse_uint(key, value);
    else if (key == "generator-sigmoid") arch.generator_sigmoid = parse_bool(key, value);
    else if (key == "gamma") vargan.gamma = parse_double(key, value);
    else if (key == "adv-weight") vargan.adv_weight = parse_double(key, value);
    else if (key == "reg-weight") vargan.reg_weight = parse_double(key, value);
    else if (key == "lambda-k") vargan.lambda_k = parse_double(key, value);
    else if (key == "log-floor") vargan.log_floor = cbigan.log_floor = parse_double(key, value);
    else if (key == "theta") cbigan.theta = parse_double(key, value);
    else if (key == "real-mix") real_mix = parse_double(key, value);
    else if (key == "lr-g") adam_generator.lr = parse_double(key, value);
    else if (key == "lr-d") adam_discriminator.lr = parse_double(key, value);
    else if (key == "lr-e") adam_encoder.lr = parse_double(key, value);
    else if (key == "beta1") adam_generator.beta1 = adam_discriminator.beta1 = adam_encoder.beta1 = parse_double(key, value);
    else if (key == "beta2") adam_generator.beta2 = adam_discriminator.beta2 = adam_encoder.beta2 = parse_double(key, value);
    else if (key == "lr-r") nesterov_regressor.lr = parse_double(key, value);
    else if (key == "momentum-r") nesterov_regressor.momentum = parse_double(key, value);
    else throw ValidationError("unknown config key '" + key + "'");
  }
}

std::string TrainerConfig::digest() const {
  Fnv1a h;
  for (const auto& [k, v] : to_kv()) {
    if (k == "steps" || k == "checkpoint-every" || k == "data") continue;
    h.update(k + "=" + v + "\n");
  }
  h.update(arch::canonical_string(arch));
  return h.hex();
}

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

Role& TrainingState::role(const std::string& name) {
  for (auto& r : roles) {
    if (r.name == name) return r;
  }
  throw ValidationError("training state has no role '" + name + "'");
}

const Role& TrainingState::role(const std::string& name) const {
  return const_cast<TrainingState*>(this)->role(name);
}

bool TrainingState::has_role(const std::string& name) const {
  for (const auto& r : roles) {
    if (r.name == name) return true;
  }
  return false;
}

arch::ArchConfig effective_arch(const TrainerConfig& config, std::size_t image_size, std::size_t landmark_count) {
  arch::ArchConfig a = config.arch;
  a.image_size = image_size;
  a.landmark_count = landmark_count;
  a.conditional = config.method != Method::began;
  return a;
}

TrainingState init_state(const TrainerConfig& config, const synth::Dataset& data) {
  TrainingState state;
  state.config = config;
  state.config.arch = effective_arch(config, data.image_size(), data.config.landmark_count);
  state.config.validate();
  state.dataset_digest = synth::dataset_digest(data);
  state.roles = build_roles(state.config);
  Rng init(mix_seed(config.seed, 0));
  for (auto& r : state.roles) r.net.initialize(init);
  state.rng = Rng(mix_seed(config.seed, 1));
  return state;
}

Batch draw_batch(TrainingState& state, const synth::Dataset& data) {
  std::vector<std::size_t> idx(state.config.batch);
  for (auto& i : idx) i = state.rng.below(data.size());
  Batch b;
  data.batch<float>(idx, b.images, b.targets);
  return b;
}

template <typename T>
DiscriminatorTerms discriminator_objective(Net<T>& D, const Tensor<T>& x, const Tensor<T>& generated, double k) {
  DiscriminatorTerms out;
  const auto real = loss::reconstruction_loss(x, D.forward(x));
  D.backward(real.grad);
  const auto fake = loss::reconstruction_loss(generated, D.forward(generated));
  if (k != 0.0) D.backward(scaled(fake.grad, -k));
  out.real = real.value;
  out.fake = fake.value;
  out.total = real.value - k * fake.value;
  return out;
}

template <typename T>
double regressor_objective(Net<T>& R, const Tensor<T>& x, const Tensor<T>& generated, const Tensor<T>& y,
                           double real_mix, double log_floor) {
  double total = 0.0;
  if (real_mix > 0.0) {
    const auto real = loss::regression_loss(y, R.forward(x), log_floor);
    R.backward(scaled(real.grad, real_mix));
    total += real_mix * real.value;
  }
  if (real_mix < 1.0) {
    const auto fake = loss::regression_loss(y, R.forward(generated), log_floor);
    R.backward(scaled(fake.grad, 1.0 - real_mix));
    total += (1.0 - real_mix) * fake.value;
  }
  return total;
}

template <typename T>
GeneratorTerms generator_objective(Net<T>& G, Net<T>& D, Net<T>* R, const Tensor<T>& generator_input,
                                   const Tensor<T>& y, double adv_weight, double reg_weight, double log_floor) {
  if (!R && reg_weight != 0.0) throw ValidationError("generator_objective: reg_weight > 0 needs a regressor");
  GeneratorTerms out;
  const Tensor<T> gz = G.forward(generator_input);
  const auto rec = loss::reconstruction_loss(gz, D.forward(gz));
  // d/dgz of mean((gz - D(gz))^2): direct path plus the path through D.
  Tensor<T> grad = D.backward(rec.grad);
  axpy(grad, -1.0, rec.grad);
  grad *= static_cast<T>(adv_weight);
  out.reconstruction = rec.value;
  if (R) {
    const auto reg = loss::regression_loss(y, R->forward(gz), log_floor);
    out.regression = reg.value;
    if (reg_weight != 0.0) axpy(grad, reg_weight, R->backward(reg.grad));
  }
  G.backward(grad);
  out.total = adv_weight * out.reconstruction + reg_weight * out.regression;
  return out;
}

template <typename T>
double cbigan_discriminator_objective(Net<T>& D, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& generated,
                                      const Tensor<T>& encoded, double log_floor) {
  const auto real = loss::log_probability_loss(D.forward(arch::broadcast_condition(x, y)), true, log_floor);
  D.backward(real.grad);
  const auto fake = loss::log_probability_loss(D.forward(arch::broadcast_condition(generated, y)), false, log_floor);
  D.backward(fake.grad);
  const auto enc = loss::log_probability_loss(D.forward(arch::broadcast_condition(x, encoded)), false, log_floor);
  D.backward(enc.grad);
  return real.value + fake.value + enc.value;
}

template <typename T>
double cbigan_generator_objective(Net<T>& G, Net<T>& D, const Tensor<T>& generator_input, const Tensor<T>& y,
                                  double log_floor) {
  const Tensor<T> gz = G.forward(generator_input);
  const auto l = loss::log_probability_loss(D.forward(arch::broadcast_condition(gz, y)), true, log_floor);
  Tensor<T> image_grad;
  arch::split_condition_gradient(D.backward(l.grad), gz.dim(1), &image_grad, static_cast<Tensor<T>*>(nullptr));
  G.backward(image_grad);
  return l.value;
}

template <typename T>
EncoderTerms cbigan_encoder_objective(Net<T>& E, Net<T>& D, const Tensor<T>& x, const Tensor<T>& y, double theta,
                                      double log_floor) {
  const Tensor<T> s = E.forward(x);
  const auto l = loss::log_probability_loss(D.forward(arch::broadcast_condition(x, s)), true, log_floor);
  Tensor<T> s_grad;
  arch::split_condition_gradient(D.backward(l.grad), x.dim(1), static_cast<Tensor<T>*>(nullptr), &s_grad);
  const auto pen = loss::squared_penalty(s, y, theta);
  s_grad += pen.grad;
  E.backward(s_grad);
  return {l.value + pen.value, -l.value, pen.value};
}

std::array<double, 3> vargan_step(TrainingState& state, const Batch& batch) {
  const auto& cfg = state.config;
  if (cfg.method == Method::cbigan) throw ValidationError("vargan_step called on a cBiGAN state");
  const bool with_regressor = cfg.method == Method::vargan;
  const std::size_t n = batch.images.dim(0);
  Role& G = state.role("G");
  Role& D = state.role("D");
  Role* R = with_regressor ? &state.role("R") : nullptr;

  const Tensor<float> z = synth::sample_latent<float>(state.rng, cfg.arch.latent_dim, n);
  const Tensor<float> gin = cfg.arch.conditional ? synth::make_condition_input(z, batch.targets) : z;
  const Tensor<float> gz = G.net.forward(gin);

  D.net.zero_grad();
  const auto d = discriminator_objective(D.net, batch.images, gz, state.k);
  D.optimizer.step(D.net);

  if (R) {
    R->net.zero_grad();
    regressor_objective(R->net, batch.images, gz, batch.targets, cfg.real_mix, cfg.vargan.log_floor);
    R->optimizer.step(R->net);
  }

  const double adv = with_regressor ? cfg.vargan.adv_weight : 1.0;
  const double reg = with_regressor ? cfg.vargan.reg_weight : 0.0;
  G.net.zero_grad();
  const auto g = generator_objective(G.net, D.net, R ? &R->net : nullptr, gin, batch.targets, adv, reg,
                                     cfg.vargan.log_floor);
  G.optimizer.step(G.net);

  state.k = loss::k_update(state.k, d.real, d.fake, cfg.vargan);
  return {d.total, g.total, with_regressor ? g.regression : d.real};
}

std::array<double, 3> cbigan_step(TrainingState& state, const Batch& batch) {
  const auto& cfg = state.config;
  if (cfg.method != Method::cbigan) throw ValidationError("cbigan_step called on a non-cBiGAN state");
  const std::size_t n = batch.images.dim(0);
  const double floor = cfg.cbigan.log_floor;
  Role& G = state.role("G");
  Role& D = state.role("D");
  Role& E = state.role("E");

  const Tensor<float> z = synth::sample_latent<float>(state.rng, cfg.arch.latent_dim, n);
  const Tensor<float> gin = synth::make_condition_input(z, batch.targets);
  const Tensor<float> gz = G.net.forward(gin);
  const Tensor<float> s = E.net.forward(batch.images);

  D.net.zero_grad();
  const double d = cbigan_discriminator_objective(D.net, batch.images, batch.targets, gz, s, floor);
  D.optimizer.step(D.net);

  G.net.zero_grad();
  const double g = cbigan_generator_objective(G.net, D.net, gin, batch.targets, floor);
  G.optimizer.step(G.net);

  E.net.zero_grad();
  const auto e = cbigan_encoder_objective(E.net, D.net, batch.images, batch.targets, cfg.cbigan.theta, floor);
  E.optimizer.step(E.net);

  // Objective values as written: L_D, L_G = log p_I, L_E = log p_s + penalty.
  return {-d, -g, e.log_p + e.penalty};
}

void step(TrainingState& state, const synth::Dataset& data) {
  const auto t0 = std::chrono::steady_clock::now();
  const Batch batch = draw_batch(state, data);
  const auto losses = state.config.method == Method::cbigan ? cbigan_step(state, batch) : vargan_step(state, batch);
  require_finite_losses(losses, state.config.method, state.step + 1);
  ++state.step;
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  state.telemetry.push_back({state.step, losses, state.k, ms});
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    Writer w(out);
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.str(state.config.digest());
    w.str(state.dataset_digest);
    w.str(kv_text(state));
    w.u64(state.step);
    w.f64(state.k);
    w.str(state.rng.state());

    std::vector<std::pair<std::string, Tensor<double>>> tensors;
    auto& mutable_state = const_cast<TrainingState&>(state);
    for (auto& r : mutable_state.roles) {
      for (auto& p : r.net.parameters()) tensors.emplace_back(r.name + "/" + p.name, p.param->value.template cast<double>());
      for (auto& m : r.optimizer.moments()) tensors.emplace_back(r.name + "/opt/" + m.name, m.tensor->template cast<double>());
      tensors.emplace_back(r.name + "/opt/step", Tensor<double>({1}, static_cast<double>(r.optimizer.step_count())));
    }
    if (!state.telemetry.empty()) {
      Tensor<double> t({state.telemetry.size(), 6});
      for (std::size_t i = 0; i < state.telemetry.size(); ++i) {
        const auto& row = state.telemetry[i];
        const double vals[6] = {static_cast<double>(row.step), row.losses[0], row.losses[1], row.losses[2], row.k,
                                row.wall_ms};
        std::copy_n(vals, 6, t.data() + i * 6);
      }
      tensors.emplace_back("telemetry", std::move(t));
    }
    w.u64(tensors.size());
    for (const auto& [name, t] : tensors) w.tensor(name, t);
    w.bytes(kMagic, sizeof kMagic);
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("not a checkpoint (bad magic): " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::string stored_digest = r.str();
  TrainingState state;
  state.dataset_digest = r.str();
  std::map<std::string, std::string> kv;
  {
    std::istringstream text(r.str());
    std::string line;
    while (std::getline(text, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  const std::size_t image_size = parse_uint("image-size", kv["image-size"]);
  const std::size_t landmarks = parse_uint("landmarks", kv["landmarks"]);
  kv.erase("image-size");
  kv.erase("landmarks");
  state.config.apply_kv(kv);
  state.config.arch = effective_arch(state.config, image_size, landmarks);
  if (state.config.digest() != stored_digest) throw ValidationError("checkpoint config digest does not match its contents");
  state.step = r.u64();
  state.k = r.f64();
  state.rng.set_state(r.str());
  state.roles = build_roles(state.config);

  std::map<std::string, Tensor<double>> tensors;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name;
    Tensor<double> t = r.tensor(name);
    tensors.emplace(name, std::move(t));
  }
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("checkpoint trailer missing: " + path.string());

  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                            ", expected " + shape_string(shape));
    }
    Tensor<double> t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  for (auto& role : state.roles) {
    for (auto& p : role.net.parameters()) p.param->value = take(role.name + "/" + p.name, p.param->value.shape()).cast<float>();
    for (auto& m : role.optimizer.moments()) *m.tensor = take(role.name + "/opt/" + m.name, m.tensor->shape()).cast<float>();
    role.optimizer.set_step_count(static_cast<std::uint64_t>(take(role.name + "/opt/step", {1})[0]));
  }
  if (auto it = tensors.find("telemetry"); it != tensors.end()) {
    const auto& t = it->second;
    if (t.rank() != 2 || t.dim(1) != 6) throw ValidationError("checkpoint telemetry has a bad shape");
    for (std::size_t i = 0; i < t.dim(0); ++i) {
      const double* v = t.data() + i * 6;
      state.telemetry.push_back({static_cast<std::uint64_t>(v[0]), {v[1], v[2], v[3]}, v[4], v[5]});
    }
    tensors.erase(it);
  }
  if (!tensors.empty()) throw ValidationError("checkpoint has unexpected tensor '" + tensors.begin()->first + "'");
  if (state.k < 0.0 || state.k > 1.0) throw ValidationError("checkpoint k outside [0, 1]");
  return state;
}

TrainingState load_checkpoint(const std::filesystem::path& path, const TrainerConfig& expected) {
  TrainingState state = load_checkpoint(path);
  if (state.config.digest() != expected.digest()) {
    throw ValidationError("checkpoint config digest " + state.config.digest() + " does not match expected " +
                          expected.digest() + " (different architecture or hyperparameters)");
  }
  return state;
}

std::string telemetry_csv(const TrainingState& state) {
  std::string out;
  for (const auto& [k, v] : state.config.to_kv()) out += "# " + k + "=" + v + "\n";
  out += "# image-size=" + std::to_string(state.config.arch.image_size) + "\n";
  out += "# landmarks=" + std::to_string(state.config.arch.landmark_count) + "\n";
  out += "# dataset-digest=" + state.dataset_digest + "\n";
  out += "# config-digest=" + state.config.digest() + "\n";
  const auto names = loss_names(state.config.method);
  out += "step," + names[0] + "," + names[1] + "," + names[2] + ",k_t,wall_ms\n";
  char buf[160];
  for (const auto& row : state.telemetry) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.3f\n", static_cast<unsigned long long>(row.step),
                  row.losses[0], row.losses[1], row.losses[2], row.k, row.wall_ms);
    out += buf;
  }
  return out;
}

std::string telemetry_digest(const TrainingState& state) {
  Fnv1a h;
  for (const auto& row : state.telemetry) {
    h.update_value(row.step);
    for (double v : row.losses) h.update_value(v);
    h.update_value(row.k);
  }
  return h.hex();
}

std::string state_digest(const TrainingState& state) {
  Fnv1a h;
  h.update(state.config.digest());
  h.update_value(state.step);
  h.update_value(state.k);
  h.update(state.rng.state());
  auto& mutable_state = const_cast<TrainingState&>(state);
  for (auto& r : mutable_state.roles) {
    for (auto& p : r.net.parameters()) {
      h.update(p.name);
      h.update(std::span(reinterpret_cast<const std::uint8_t*>(p.param->value.data()), p.param->value.size() * sizeof(float)));
    }
    for (auto& m : r.optimizer.moments()) {
      h.update(m.name);
      h.update(std::span(reinterpret_cast<const std::uint8_t*>(m.tensor->data()), m.tensor->size() * sizeof(float)));
    }
    h.update_value(r.optimizer.step_count());
  }
  return h.hex();
}

TrainingState train(const TrainerConfig& config, const synth::Dataset& data, const TrainOptions& options) {
  config.validate();
  TrainingState state;
  if (options.resume) {
    TrainerConfig expected = config;
    expected.arch = effective_arch(config, data.image_size(), data.config.landmark_count);
    state = load_checkpoint(*options.resume, expected);
    if (state.dataset_digest != synth::dataset_digest(data)) {
      throw ValidationError("checkpoint was trained on dataset " + state.dataset_digest + ", not this one");
    }
    state.config.steps = config.steps;
    state.config.checkpoint_every = config.checkpoint_every;
    state.config.data = config.data;
    log::info("resuming " + to_string(state.config.method) + " at step " + std::to_string(state.step));
  } else {
    state = init_state(config, data);
  }
  const std::size_t stop = options.stop_after ? std::min(options.stop_after, state.config.steps) : state.config.steps;
  std::filesystem::create_directories(options.out);
  auto write_telemetry = [&] {
    std::ofstream out(options.out / "telemetry.csv", std::ios::binary | std::ios::trunc);
    out << telemetry_csv(state);
  };
  log::info("training " + to_string(state.config.method) + " for " + std::to_string(stop) + " steps, " +
            std::to_string(data.size()) + " images, config digest " + state.config.digest());
  try {
    while (state.step < stop) {
      step(state, data);
      const auto& row = state.telemetry.back();
      if (state.step % 100 == 0 || state.step == stop) {
        const auto names = loss_names(state.config.method);
        std::ostringstream msg;
        msg << "step " << state.step << ' ' << names[0] << '=' << row.losses[0] << ' ' << names[1] << '='
            << row.losses[1] << ' ' << names[2] << '=' << row.losses[2] << " k=" << row.k << " (" << row.wall_ms
            << " ms)";
        log::info(msg.str());
      }
      if (state.config.checkpoint_every && state.step % state.config.checkpoint_every == 0) {
        save_checkpoint(state, options.out / ("checkpoint-" + std::to_string(state.step) + ".vgck"));
        write_telemetry();
      }
    }
  } catch (const NonFiniteError&) {
    write_telemetry();
    throw;
  }
  save_checkpoint(state, options.out / "checkpoint.vgck");
  write_telemetry();
  return state;
}

#define VARGAN_INSTANTIATE_OBJECTIVES(T)                                                                        \
  template DiscriminatorTerms discriminator_objective<T>(Net<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template double regressor_objective<T>(Net<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, \
                                         double);                                                               \
  template GeneratorTerms generator_objective<T>(Net<T>&, Net<T>&, Net<T>*, const Tensor<T>&, const Tensor<T>&, \
                                                 double, double, double);                                       \
  template double cbigan_discriminator_objective<T>(Net<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                                    const Tensor<T>&, const Tensor<T>&, double);                \
  template double cbigan_generator_objective<T>(Net<T>&, Net<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template EncoderTerms cbigan_encoder_objective<T>(Net<T>&, Net<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                                    double, double);

VARGAN_INSTANTIATE_OBJECTIVES(float)
VARGAN_INSTANTIATE_OBJECTIVES(double)

}  // namespace vargan::train

#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "support/fixtures.hpp"
#include "vargan/error.hpp"
#include "vargan/training.hpp"

using namespace vargan;
using namespace vargan::train;
namespace fs = std::filesystem;
namespace vt = vargan::testing;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vargan-train-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Tensor<double>> grads(nn::Net<double>& net) {
  std::vector<Tensor<double>> out;
  for (auto& p : net.parameters()) out.push_back(p.param->grad);
  return out;
}

std::vector<Tensor<float>> values(Role& role) {
  std::vector<Tensor<float>> out;
  for (auto& p : role.net.parameters()) out.push_back(p.param->value);
  return out;
}

double max_change(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) worst = std::max(worst, std::abs(double(a[k][i]) - b[k][i]));
  }
  return worst;
}

nn::Parameter<double>& param(nn::Net<double>& net, const std::string& name) {
  for (auto& p : net.parameters()) {
    if (p.name == name) return *p.param;
  }
  throw std::runtime_error("no parameter " + name);
}

struct VarganNets {
  arch::ArchConfig cfg = vt::tiny_arch();
  nn::Net<double> G = arch::build_generator<double>(cfg);
  nn::Net<double> D = arch::build_began_discriminator<double>(cfg);
  nn::Net<double> R = arch::build_regressor<double>(cfg);
  Tensor<double> input, y;

  VarganNets() {
    Rng rng(3);
    G.initialize(rng);
    D.initialize(rng);
    R.initialize(rng);
    y = vt::random_tensor<double>({3, cfg.target_dim()}, rng, -0.8, 0.8);
    input = vt::random_tensor<double>({3, cfg.generator_input_dim()}, rng);
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t j = 0; j < cfg.target_dim(); ++j) {
        input[b * cfg.generator_input_dim() + cfg.latent_dim + j] = y[b * cfg.target_dim() + j];
      }
    }
  }

  std::vector<Tensor<double>> generator_grad(double reg_weight) {
    G.zero_grad();
    generator_objective(G, D, &R, input, y, 0.97, reg_weight, 1e-6);
    return grads(G);
  }
};

}  // namespace

TEST(Config, KvRoundTripAndUnknownKeys) {
  auto c = vt::tiny_trainer(Method::cbigan);
  TrainerConfig d;
  d.apply_kv(c.to_kv());
  EXPECT_EQ(d.digest(), c.digest());
  EXPECT_EQ(d.to_kv(), c.to_kv());
  const std::map<std::string, std::string> unknown = {{"no-such-key", "1"}}, bad = {{"batch", "many"}},
                                           zero_lr = {{"lr-g", "0"}};
  EXPECT_THROW(d.apply_kv(unknown), ValidationError);
  EXPECT_THROW(d.apply_kv(bad), ValidationError);
  EXPECT_THROW(
      {
        d.apply_kv(zero_lr);
        d.validate();
      },
      ValidationError);
  EXPECT_EQ(parse_method("began"), Method::began);
  EXPECT_THROW(parse_method("wgan"), ValidationError);
}

TEST(Config, DigestIgnoresStepsAndData) {
  auto a = vt::tiny_trainer(Method::vargan, 10), b = vt::tiny_trainer(Method::vargan, 99);
  b.data = "elsewhere";
  b.checkpoint_every = 3;
  EXPECT_EQ(a.digest(), b.digest());
  b.vargan.reg_weight = 0.0;
  EXPECT_NE(a.digest(), b.digest());
}

TEST(Config, KvFileParsing) {
  const auto dir = temp_dir("kv");
  std::ofstream(dir / "c.cfg") << "# comment\n\nbatch = 8\nmethod=cbigan  # trailing\n";
  const auto kv = read_kv_file(dir / "c.cfg");
  EXPECT_EQ(kv.at("batch"), "8");
  EXPECT_EQ(kv.at("method"), "cbigan");
  fs::remove_all(dir);
}

TEST(Routing, ZetaZeroIgnoresRegressor) {
  VarganNets n;
  const auto before = n.generator_grad(0.0);
  for (auto& p : n.R.parameters()) p.param->value.fill(0.0);
  EXPECT_EQ(n.generator_grad(0.0), before);
}

TEST(Routing, PositiveZetaDependsOnRegressor) {
  VarganNets n;
  const auto before = n.generator_grad(0.03);
  for (auto& p : n.R.parameters()) p.param->value.fill(0.0);
  EXPECT_NE(n.generator_grad(0.03), before);
}

TEST(Cbigan, ZeroFinalLayerGivesHalfProbabilities) {
  const auto cfg = vt::tiny_arch();
  auto D = arch::build_pair_discriminator<double>(cfg);
  Rng rng(4);
  D.initialize(rng);
  param(D, "fc.weight").value.fill(0.0);
  param(D, "fc.bias").value.fill(0.0);
  const auto x = vt::random_tensor<double>({2, 1, 8, 8}, rng, 0.0, 1.0);
  const auto y = vt::random_tensor<double>({2, cfg.target_dim()}, rng);
  const auto g = vt::random_tensor<double>({2, 1, 8, 8}, rng, 0.0, 1.0);
  const auto s = vt::random_tensor<double>({2, cfg.target_dim()}, rng);
  // The objective is the negation of L_D = 3 log 0.5.
  EXPECT_NEAR(cbigan_discriminator_objective(D, x, y, g, s, 1e-6), -3.0 * std::log(0.5), 1e-12);
}

TEST(Cbigan, ThetaZeroRemovesPenaltyGradient) {
  const auto cfg = vt::tiny_arch();
  auto D = arch::build_pair_discriminator<double>(cfg);
  auto E = arch::build_landmark_encoder<double>(cfg);
  Rng rng(5);
  D.initialize(rng);
  E.initialize(rng);
  const auto x = vt::random_tensor<double>({2, 1, 8, 8}, rng, 0.0, 1.0);
  const auto y1 = vt::random_tensor<double>({2, cfg.target_dim()}, rng);
  const auto y2 = vt::random_tensor<double>({2, cfg.target_dim()}, rng);
  auto grad_for = [&](const Tensor<double>& y, double theta) {
    E.zero_grad();
    const auto terms = cbigan_encoder_objective(E, D, x, y, theta, 1e-6);
    if (theta == 0.0) {
      EXPECT_EQ(terms.penalty, 0.0);
    }
    return grads(E);
  };
  EXPECT_EQ(grad_for(y1, 0.0), grad_for(y2, 0.0));
  EXPECT_NE(grad_for(y1, 0.8), grad_for(y2, 0.8));
}

TEST(Step, KStaysInUnitInterval) {
  const auto data = vt::tiny_dataset();
  auto cfg = vt::tiny_trainer(Method::vargan);
  // A large lambda_k exercises both clamps quickly.
  cfg.vargan.lambda_k = 0.5;
  auto state = init_state(cfg, data);
  for (int i = 0; i < 300; ++i) {
    step(state, data);
    ASSERT_GE(state.k, 0.0);
    ASSERT_LE(state.k, 1.0);
  }
}

TEST(Step, FixedSeedIsDeterministic) {
  const auto data = vt::tiny_dataset();
  for (Method m : {Method::vargan, Method::cbigan, Method::began}) {
    auto a = init_state(vt::tiny_trainer(m), data), b = init_state(vt::tiny_trainer(m), data);
    EXPECT_EQ(state_digest(a), state_digest(b));
    step(a, data);
    step(b, data);
    EXPECT_EQ(state_digest(a), state_digest(b)) << to_string(m);
    EXPECT_EQ(telemetry_digest(a), telemetry_digest(b));
  }
}

TEST(Step, EachRoleMovesOnlyThroughItsOwnOptimizer) {
  const auto data = vt::tiny_dataset();
  for (const std::string frozen : {"G", "D", "R"}) {
    auto cfg = vt::tiny_trainer(Method::vargan);
    if (frozen == "G") cfg.adam_generator.lr = 1e-30;
    if (frozen == "D") cfg.adam_discriminator.lr = 1e-30;
    if (frozen == "R") cfg.nesterov_regressor.lr = 1e-30;
    auto state = init_state(cfg, data);
    std::map<std::string, std::vector<Tensor<float>>> before;
    for (auto& r : state.roles) before[r.name] = values(r);
    step(state, data);
    for (auto& r : state.roles) {
      // A 1e-30 learning rate can only move parameters by about 1e-30.
      if (r.name == frozen) {
        EXPECT_LT(max_change(values(r), before[r.name]), 1e-25) << r.name;
      } else {
        EXPECT_GT(max_change(values(r), before[r.name]), 1e-7) << r.name;
      }
    }
  }
}

TEST(Train, TelemetryAndResumeEquivalence) {
  const auto data = vt::tiny_dataset();
  for (Method m : {Method::vargan, Method::cbigan}) {
    const auto cfg = vt::tiny_trainer(m, 10);
    const auto full_dir = temp_dir("full"), part_dir = temp_dir("part");
    const auto full = vargan::train::train(cfg, data, {full_dir, std::nullopt, 0});
    ASSERT_EQ(full.telemetry.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(full.telemetry[i].step, i + 1);

    std::ifstream csv(full_dir / "telemetry.csv");
    std::size_t data_rows = 0;
    for (std::string line; std::getline(csv, line);) data_rows += !line.empty() && line[0] != '#';
    EXPECT_EQ(data_rows, 11u);  // header + rows

    vargan::train::train(cfg, data, {part_dir, std::nullopt, 4});
    const auto resumed = vargan::train::train(cfg, data, {part_dir, part_dir / "checkpoint.vgck", 0});
    EXPECT_EQ(state_digest(resumed), state_digest(full)) << to_string(m);
    EXPECT_EQ(telemetry_digest(resumed), telemetry_digest(full));
    fs::remove_all(full_dir);
    fs::remove_all(part_dir);
  }
}

TEST(Checkpoint, RoundTripAndRejections) {
  const auto data = vt::tiny_dataset();
  const auto cfg = vt::tiny_trainer(Method::vargan, 3);
  const auto dir = temp_dir("ckpt");
  const auto state = vargan::train::train(cfg, data, {dir, std::nullopt, 0});
  const auto path = dir / "checkpoint.vgck";
  const auto back = load_checkpoint(path, state.config);
  EXPECT_EQ(state_digest(back), state_digest(state));
  EXPECT_EQ(back.k, state.k);
  EXPECT_EQ(back.step, 3u);

  auto other = state.config;
  other.arch.decoder_channels += 1;
  EXPECT_THROW(load_checkpoint(path, other), ValidationError);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected rejection";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.vgck"), ValidationError);
  fs::remove_all(dir);
}

TEST(Train, ResumeOnDifferentDatasetIsRejected) {
  const auto data = vt::tiny_dataset();
  const auto cfg = vt::tiny_trainer(Method::began, 4);
  const auto dir = temp_dir("otherdata");
  vargan::train::train(cfg, data, {dir, std::nullopt, 2});
  EXPECT_THROW(vargan::train::train(cfg, vt::tiny_dataset(48, 4), {dir, dir / "checkpoint.vgck", 0}), ValidationError);
  fs::remove_all(dir);
}

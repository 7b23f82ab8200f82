#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "vargan/error.hpp"
#include "vargan/gradient_check.hpp"
#include "vargan/layers.hpp"
#include "vargan/net.hpp"
#include "vargan/optimizer.hpp"

using namespace vargan;
using namespace vargan::nn;

namespace {

Tensor<double> t(Shape s, std::vector<double> v) { return Tensor<double>(std::move(s), std::move(v)); }

// Sum of squares / 2 as loss: gradient equals the output.
double half_square(const Tensor<double>& out, Tensor<double>& g) {
  double v = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    v += 0.5 * out[i] * out[i];
    g[i] = out[i];
  }
  return v;
}

}  // namespace

TEST(Activation, KnownValues) {
  const auto x = t({1, 2}, {0.0, -1.0});
  const auto e = activation(Activation::elu, x);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_NEAR(e[1], std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(e[1], -0.63212, 1e-5);
  EXPECT_EQ(activation(Activation::tanh, t({1, 1}, {0.0}))[0], 0.0);
  EXPECT_EQ(activation(Activation::sigmoid, t({1, 1}, {0.0}))[0], 0.5);
  EXPECT_EQ(activation(Activation::relu, t({1, 2}, {-2.0, 3.0}))[1], 3.0);
  EXPECT_EQ(activation(Activation::relu, t({1, 2}, {-2.0, 3.0}))[0], 0.0);
}

TEST(Activation, EluContinuousAtZero) {
  for (double eps : {1e-3, 1e-6, 1e-9}) {
    const auto y = activation(Activation::elu, t({1, 2}, {eps, -eps}));
    EXPECT_LT(std::abs(y[0] - y[1]), 2.1 * eps);
  }
}

TEST(Activation, NonFiniteInputIsRejected) {
  EXPECT_THROW(activation(Activation::elu, t({1, 2}, {0.0, std::nan("")})), NonFiniteError);
  EXPECT_THROW(activation(Activation::tanh, t({1, 1}, {INFINITY})), NonFiniteError);
}

TEST(Dense, IdentityZeroAndDirect) {
  Dense<double> id(2, 2);
  id.weight().value = t({2, 2}, {1, 0, 0, 1});
  id.bias().value.fill(0.0);
  EXPECT_EQ(id.forward(t({1, 2}, {1, 2})), t({1, 2}, {1, 2}));

  Dense<double> zero(2, 1);
  zero.weight().value.fill(0.0);
  zero.bias().value = t({1}, {3});
  EXPECT_EQ(zero.forward(t({1, 2}, {-7, 11})), t({1, 1}, {3}));

  Dense<double> sum(2, 1);
  sum.weight().value = t({1, 2}, {1, 1});
  sum.bias().value.fill(0.0);
  EXPECT_EQ(sum.forward(t({1, 2}, {2, 3})), t({1, 1}, {5}));
}

TEST(Dense, ShapeMismatchThrows) {
  Dense<double> d(3, 2);
  EXPECT_THROW(d.forward(t({1, 2}, {1, 2})), ValidationError);
}

TEST(Dense, OneLayerChainRule) {
  Net<double> net("id", {2});
  net.add("fc", std::make_unique<Dense<double>>(2, 2));
  auto params = net.parameters();
  params[0].param->value = t({2, 2}, {1, 0, 0, 1});
  params[1].param->value.fill(0.0);
  const auto x = t({1, 2}, {0.5, -2.0});
  net.forward(x);
  net.zero_grad();
  const auto g = t({1, 2}, {3.0, 4.0});
  const auto dx = net.backward(g);
  EXPECT_EQ(dx, g);
  // weight grad = g x^T
  EXPECT_EQ(params[0].param->grad, t({2, 2}, {1.5, -6.0, 2.0, -8.0}));
  EXPECT_EQ(params[1].param->grad, t({2}, {3.0, 4.0}));
}

TEST(Conv2d, CenteredDeltaIsIdentity) {
  Conv2d<double> c(1, 1);
  c.weight().value.fill(0.0);
  c.weight().value[4] = 1.0;
  c.bias().value.fill(0.0);
  Rng rng(1);
  const auto x = vargan::testing::random_tensor<double>({2, 1, 5, 5}, rng);
  EXPECT_EQ(c.forward(x), x);
}

TEST(Conv2d, OnesKernelOnConstantImage) {
  Conv2d<double> c(1, 1);
  c.weight().value.fill(1.0);
  c.bias().value.fill(0.0);
  const Tensor<double> x({1, 1, 5, 5}, 0.7);
  const auto y = c.forward(x);
  EXPECT_NEAR(y[2 * 5 + 2], 9 * 0.7, 1e-15);
  // Corner sees 4 pixels under zero padding.
  EXPECT_NEAR(y[0], 4 * 0.7, 1e-15);
}

TEST(Conv2d, StrideTwoShapeAndChannelCheck) {
  Conv2d<double> c(2, 3, 2);
  EXPECT_EQ(c.output_shape({2, 8, 8}), (Shape{3, 4, 4}));
  Rng rng(2);
  c.initialize(rng);
  EXPECT_EQ(c.forward(vargan::testing::random_tensor<double>({1, 2, 8, 8}, rng)).shape(), (Shape{1, 3, 4, 4}));
  EXPECT_THROW(c.forward(vargan::testing::random_tensor<double>({1, 1, 8, 8}, rng)), ValidationError);
}

TEST(PoolUnpool, KnownValues) {
  MaxPool2x2<double> pool;
  EXPECT_EQ(pool.forward(t({1, 1, 2, 2}, {1, 2, 3, 4})), t({1, 1, 1, 1}, {4}));
  Upsample2x2<double> up;
  EXPECT_EQ(up.forward(t({1, 1, 1, 1}, {5})), t({1, 1, 2, 2}, {5, 5, 5, 5}));
  const Tensor<double> c({1, 2, 4, 4}, 0.25);
  EXPECT_EQ(up.forward(pool.forward(c)), c);
  EXPECT_THROW(pool.forward(Tensor<double>({1, 1, 3, 4})), ValidationError);
}

TEST(Net, BackwardWithoutForwardThrows) {
  Net<double> net("n", {3});
  net.add("fc", std::make_unique<Dense<double>>(3, 2));
  EXPECT_THROW(net.backward(Tensor<double>({1, 2})), ValidationError);
}

TEST(Net, RejectsShapeDriftAndDuplicateLabels) {
  Net<double> net("n", {3});
  net.add("fc", std::make_unique<Dense<double>>(3, 2));
  EXPECT_THROW(net.add("fc2", std::make_unique<Dense<double>>(3, 2)), ValidationError);
  EXPECT_THROW(net.add("fc", std::make_unique<Dense<double>>(2, 2)), ValidationError);
}

TEST(Net, ZeroLinearNetOutputsZero) {
  Net<double> net("n", {4});
  net.add("a", std::make_unique<Dense<double>>(4, 3));
  net.add("b", std::make_unique<Dense<double>>(3, 2));
  for (auto& p : net.parameters()) p.param->value.fill(0.0);
  Rng rng(3);
  const auto y = net.forward(vargan::testing::random_tensor<double>({5, 4}, rng));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Net, OutputShapeMatchesDeclared) {
  Rng rng(4);
  for (std::size_t size : {8, 12, 16}) {
    Net<double> net("n", {2, size, size});
    net.add("conv", std::make_unique<Conv2d<double>>(2, 3));
    net.add("act", std::make_unique<ActivationLayer<double>>(Activation::elu));
    net.add("pool", std::make_unique<MaxPool2x2<double>>());
    net.add("flat", std::make_unique<Flatten<double>>());
    net.initialize(rng);
    auto s = net.output_shape();
    s.insert(s.begin(), 3);
    EXPECT_EQ(net.forward(vargan::testing::random_tensor<double>({3, 2, size, size}, rng)).shape(), s);
  }
}

TEST(Net, ForwardBackwardIsBitDeterministic) {
  auto build = [] {
    Net<double> net("n", {1, 6, 6});
    net.add("conv", std::make_unique<Conv2d<double>>(1, 2));
    net.add("act", std::make_unique<ActivationLayer<double>>(Activation::elu));
    net.add("flat", std::make_unique<Flatten<double>>());
    net.add("fc", std::make_unique<Dense<double>>(72, 3));
    Rng rng(9);
    net.initialize(rng);
    return net;
  };
  Rng rng(10);
  const auto x = vargan::testing::random_tensor<double>({2, 1, 6, 6}, rng);
  const auto g = vargan::testing::random_tensor<double>({2, 3}, rng);
  auto a = build(), b = build();
  EXPECT_EQ(a.forward(x), b.forward(x));
  a.zero_grad();
  b.zero_grad();
  EXPECT_EQ(a.backward(g), b.backward(g));
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].param->grad, pb[i].param->grad);
}

TEST(GradientCheck, DenseTanhSquaredLoss) {
  Net<double> net("n", {4});
  net.add("fc", std::make_unique<Dense<double>>(4, 3));
  net.add("tanh", std::make_unique<ActivationLayer<double>>(Activation::tanh));
  Rng rng(5);
  net.initialize(rng);
  const auto r = gradient_check(net, half_square, vargan::testing::random_tensor<double>({3, 4}, rng));
  EXPECT_TRUE(r.passed) << r.worst_entry;
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradientCheck, ConvEluNet) {
  Net<double> net("n", {2, 6, 6});
  net.add("conv", std::make_unique<Conv2d<double>>(2, 3));
  net.add("elu", std::make_unique<ActivationLayer<double>>(Activation::elu));
  net.add("conv2", std::make_unique<Conv2d<double>>(3, 2, 2));
  Rng rng(6);
  net.initialize(rng);
  const auto r = gradient_check(net, half_square, vargan::testing::random_tensor<double>({2, 2, 6, 6}, rng));
  EXPECT_LT(r.max_relative_error, 1e-6) << r.worst_entry;
}

// Randomized shapes over every layer kind.
TEST(GradientCheck, EveryLayerKindRandomShapes) {
  Rng rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t c = 1 + rng.below(3), s = 2 * (2 + rng.below(3)), o = 1 + rng.below(3);
    Net<double> net("n", {c, s, s});
    net.add("conv", std::make_unique<Conv2d<double>>(c, o));
    net.add("elu", std::make_unique<ActivationLayer<double>>(Activation::elu));
    net.add("pool", std::make_unique<MaxPool2x2<double>>());
    net.add("up", std::make_unique<Upsample2x2<double>>());
    net.add("convs2", std::make_unique<Conv2d<double>>(o, 2, 2));
    net.add("sig", std::make_unique<ActivationLayer<double>>(Activation::sigmoid));
    net.add("flat", std::make_unique<Flatten<double>>());
    const std::size_t f = 2 * (s / 2) * (s / 2);
    net.add("fc", std::make_unique<Dense<double>>(f, 8));
    net.add("relu", std::make_unique<ActivationLayer<double>>(Activation::relu));
    net.add("reshape", std::make_unique<Reshape<double>>(Shape{2, 2, 2}));
    net.add("conv3", std::make_unique<Conv2d<double>>(2, 1));
    net.add("tanh", std::make_unique<ActivationLayer<double>>(Activation::tanh));
    net.initialize(rng);
    GradientCheckOptions opt;
    opt.seed = static_cast<std::uint64_t>(trial);
    const auto r = gradient_check(net, half_square, vargan::testing::random_tensor<double>({2, c, s, s}, rng), opt);
    EXPECT_LT(r.max_relative_error, 1e-6) << "trial " << trial << ": " << r.worst_entry;
  }
}

namespace {

// Layer whose backward doubles the true gradient.
class BrokenScale final : public Layer<double> {
 public:
  LayerKind kind() const override { return LayerKind::activation; }
  std::string describe() const override { return "broken"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<double> forward(const Tensor<double>& x) override { return x; }
  Tensor<double> backward(const Tensor<double>& g) override {
    auto out = g;
    out *= 2.0;
    return out;
  }
  std::unique_ptr<Layer<double>> clone() const override { return std::make_unique<BrokenScale>(*this); }
};

}  // namespace

TEST(GradientCheck, CorruptedGradientFails) {
  Net<double> net("n", {3});
  net.add("fc", std::make_unique<Dense<double>>(3, 2));
  net.add("broken", std::make_unique<BrokenScale>());
  Rng rng(8);
  net.initialize(rng);
  const auto r = gradient_check(net, half_square, vargan::testing::random_tensor<double>({2, 3}, rng));
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  for (OptimizerRule rule : {OptimizerRule{AdamSettings{}}, OptimizerRule{NesterovSettings{}}}) {
    Net<double> net("n", {2});
    net.add("fc", std::make_unique<Dense<double>>(2, 2));
    Rng rng(1);
    net.initialize(rng);
    const auto before = net.parameters()[0].param->value;
    Optimizer<double> opt(rule, net);
    net.zero_grad();
    opt.step(net);
    EXPECT_EQ(net.parameters()[0].param->value, before);
  }
}

TEST(Optimizer, AdamSingleStep) {
  Net<double> net("n", {1});
  net.add("fc", std::make_unique<Dense<double>>(1, 1));
  auto p = net.parameters();
  p[0].param->value.fill(0.3);
  p[1].param->value.fill(0.0);
  Optimizer<double> opt(AdamSettings{1e-4, 0.5, 0.999, 1e-8}, net);
  p[0].param->grad.fill(1.0);
  p[1].param->grad.fill(1.0);
  opt.step(net);
  // m_hat = v_hat = 1, step = lr * 1 / (1 + eps)
  EXPECT_NEAR(p[0].param->value[0] - 0.3, -1e-4 / (1.0 + 1e-8), 1e-16);
  EXPECT_NEAR(p[1].param->value[0], -1e-4, 1e-12);
}

TEST(Optimizer, NesterovVelocityRecurrence) {
  Net<double> net("n", {1});
  net.add("fc", std::make_unique<Dense<double>>(1, 1));
  auto p = net.parameters();
  p[0].param->value.fill(0.0);
  Optimizer<double> opt(NesterovSettings{0.01, 0.9}, net);
  Tensor<double>* velocity = nullptr;
  for (auto& m : opt.moments()) {
    if (m.name == p[0].name + ".velocity") velocity = m.tensor;
  }
  ASSERT_NE(velocity, nullptr);
  p[0].param->grad.fill(1.0);
  opt.step(net);
  EXPECT_NEAR((*velocity)[0], -0.01, 1e-15);
  // theta += mu v - lr g = 0.9 * -0.01 - 0.01
  EXPECT_NEAR(p[0].param->value[0], -0.019, 1e-15);
  p[0].param->grad.fill(1.0);
  opt.step(net);
  EXPECT_NEAR((*velocity)[0], -0.019, 1e-15);
  EXPECT_NEAR(p[0].param->value[0], -0.019 + 0.9 * -0.019 - 0.01, 1e-15);
}

TEST(Optimizer, NonFiniteGradientNamesParameterAndLeavesState) {
  Net<double> net("n", {2});
  net.add("fc", std::make_unique<Dense<double>>(2, 2));
  Rng rng(2);
  net.initialize(rng);
  Optimizer<double> opt(AdamSettings{}, net);
  auto p = net.parameters();
  const auto before = p[0].param->value;
  p[0].param->grad.fill(0.1);
  p[1].param->grad[1] = std::nan("");
  try {
    opt.step(net);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find(p[1].name), std::string::npos) << e.what();
  }
  EXPECT_EQ(p[0].param->value, before);
  EXPECT_EQ(opt.step_count(), 0u);
}

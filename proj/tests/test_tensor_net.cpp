#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "morai/level.hpp"
#include "morai/tensor_net.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace morai;

namespace {

Volume grid3x3() {
  // Row-major [[1,2,3],[4,5,6],[7,8,9]] with x the column.
  Volume v(3, 3, 1);
  int k = 1;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) v.at(x, y, 0) = k++;
  return v;
}

Network scalar_net(double w) {
  Architecture arch{1, 1, 1, {}, 1, std::nullopt};
  auto net = Network::create(arch, 0);
  net.head().weights = {w};
  net.head().biases = {0.0};
  return net;
}

}  // namespace

TEST(Activation, LeakyRelu) {
  EXPECT_EQ(leaky_relu(2.0, 0.01), 2.0);
  EXPECT_DOUBLE_EQ(leaky_relu(-1.0, 0.01), -0.01);
  EXPECT_DOUBLE_EQ(leaky_relu_derivative(-2.0, 0.01), 0.01);
  EXPECT_EQ(leaky_relu_derivative(3.0, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(leaky_relu_derivative(0.0, 0.01), 0.01);
}

TEST(Conv, IdentityKernel) {
  auto layer = ConvLayer::zeros(1, 3, 1);
  layer.weights[layer.weight_index(0, 1, 1, 0)] = 1.0;
  auto in = grid3x3();
  EXPECT_EQ(conv2d_forward(in, layer), in);
}

TEST(Conv, ZeroInputGivesBias) {
  auto layer = ConvLayer::zeros(3, 3, 2);
  std::mt19937_64 rng(1);
  for (double& w : layer.weights) w = static_cast<double>(rng() % 100) / 10.0;
  layer.biases = {0.5, -1.0, 2.0};
  auto out = conv2d_forward(Volume(5, 4, 2), layer);
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 4; ++y)
      for (int f = 0; f < 3; ++f) EXPECT_EQ(out.at(x, y, f), layer.biases[f]);
}

TEST(Conv, AllOnesKernelSums) {
  auto layer = ConvLayer::zeros(1, 3, 1);
  std::fill(layer.weights.begin(), layer.weights.end(), 1.0);
  auto in = grid3x3();
  auto out = conv2d_forward(in, layer);
  auto ref = oracle::conv(in, layer);
  EXPECT_EQ(ref.at(1, 1, 0), 45.0);
  EXPECT_EQ(ref.at(0, 0, 0), 12.0);
  EXPECT_EQ(out.at(1, 1, 0), 45.0);
  EXPECT_EQ(out.at(0, 0, 0), 12.0);
  EXPECT_EQ(out, ref);
}

TEST(Conv, MatchesBruteForceIncludingEvenSizes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int size : {1, 2, 3, 4, 5}) {
    auto layer = ConvLayer::zeros(3, size, 2);
    for (double& w : layer.weights) w = u(rng);
    for (double& b : layer.biases) b = u(rng);
    Volume in(7, 5, 2);
    for (double& v : in.values()) v = u(rng);
    auto out = conv2d_forward(in, layer);
    auto ref = oracle::conv(in, layer);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12) << "size " << size;
  }
}

TEST(Conv, ShapeMismatch) {
  auto layer = ConvLayer::zeros(1, 3, 2);
  EXPECT_MORAI_ERROR(conv2d_forward(Volume(4, 4, 3), layer), ErrorCode::kShapeMismatch);
}

TEST(Loss, MaskedMse) {
  std::vector<double> a{1.0, 2.0}, m{1.0, 0.0};
  EXPECT_EQ(mse(a, a, m), 0.0);
  std::vector<double> p{1.0}, t{0.0}, one{1.0};
  EXPECT_EQ(mse(p, t, one), 1.0);
  std::vector<double> p2{1.0, 1.0}, t2{0.0, 1.0}, m2{1.0, 0.0};
  EXPECT_EQ(mse(p2, t2, m2), 1.0);
  std::vector<double> none{0.0, 0.0};
  EXPECT_EQ(mse(p2, t2, none), 0.0);
}

TEST(Backward, ScalarChainRule) {
  auto net = scalar_net(1.0);
  Volume x(1, 1, 1, 2.0), target(1, 1, 1, 0.0), mask(1, 1, 1, 1.0);
  auto r = backward(net, x, target, mask);
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  ASSERT_EQ(r.gradients.size(), 2u);
  EXPECT_DOUBLE_EQ(r.gradients[0][0], 8.0);
  EXPECT_DOUBLE_EQ(r.gradients[1][0], 4.0);
}

TEST(Backward, ZeroResidualZeroGradients) {
  auto g = oracle::grad_instance(3);
  auto out = g.net.forward(g.input);
  Volume mask(out.width(), out.height(), out.channels(), 1.0);
  auto r = backward(g.net, g.input, out, mask);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& block : r.gradients)
    for (double v : block) EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, LinearRegionIsExact) {
  // Positive weights and inputs keep every unit on the identity branch.
  Architecture arch{3, 2, 2, {}, 2, std::nullopt};
  auto net = Network::create(arch, 4);
  for (double& w : net.head().weights) w = std::abs(w) + 0.1;
  Volume in(3, 2, 2);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (double& v : in.values()) v = u(rng);
  Volume target(3, 2, 2);
  for (double& v : target.values()) v = u(rng);
  EXPECT_LT(grad_check(net, in, target, 1e-4), 1e-6);
}

TEST(GradCheck, ScaledDownArchitecture) {
  for (std::uint64_t seed : {100u, 101u}) {
    auto g = oracle::grad_instance(seed);
    EXPECT_LT(grad_check(g.net, g.input, g.target, 1e-4), 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, NonPositiveEpsilon) {
  auto g = oracle::grad_instance(1);
  EXPECT_MORAI_ERROR(grad_check(g.net, g.input, g.target, 0.0), ErrorCode::kInvalidArgument);
  EXPECT_MORAI_ERROR(grad_check(g.net, g.input, g.target, -1e-4), ErrorCode::kInvalidArgument);
}

TEST(Adam, ZeroGradientIsNoOp) {
  std::vector<double> w{1.0, -2.0};
  std::vector<std::span<double>> params{w};
  AdamState s;
  adam_step(params, {{0.0, 0.0}}, s);
  EXPECT_EQ(w, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(s.step_count, 0);
  for (const auto& m : s.first_moment)
    for (double v : m) EXPECT_EQ(v, 0.0);
  adam_step(params, {{0.5, 0.0}}, s);
  auto m1 = s.first_moment;
  auto m2 = s.second_moment;
  auto saved = w;
  adam_step(params, {{0.0, 0.0}}, s);
  EXPECT_EQ(w, saved);
  EXPECT_EQ(s.first_moment, m1);
  EXPECT_EQ(s.second_moment, m2);
  EXPECT_EQ(s.step_count, 1);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  for (double g : {3.0, -0.02, 1e-3}) {
    std::vector<double> w{0.0};
    std::vector<std::span<double>> params{w};
    AdamState s;
    adam_step(params, {{g}}, s);
    // m_hat = g, v_hat = g^2.
    const double expected = -1e-3 * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(w[0], expected, 1e-15);
    EXPECT_NEAR(std::abs(w[0]), 1e-3, 1e-7);
  }
}

TEST(Adam, QuadraticConverges) {
  std::vector<double> w{0.0};
  std::vector<std::span<double>> params{w};
  auto s = AdamState::with_lr(0.1);
  // Scalar recurrence as the reference.
  double rw = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * (w[0] - 3.0);
    adam_step(params, {{g}}, s);
    const double rg = 2.0 * (rw - 3.0);
    m = 0.9 * m + 0.1 * rg;
    v = 0.999 * v + 0.001 * rg * rg;
    rw -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(w[0], rw, 1e-12);
  }
  EXPECT_LT(std::abs(w[0] - 3.0), 0.5);
  for (const auto& block : s.second_moment)
    for (double x : block) EXPECT_GE(x, 0.0);
}

TEST(Network, AgentShapeContract) {
  auto net = Network::create(agent_architecture(), 1);
  EXPECT_EQ(net.head().out_dim(), 19200u);
  auto out = net.forward(to_tensor(empty_window()));
  EXPECT_EQ(out.width(), 40);
  EXPECT_EQ(out.height(), 15);
  EXPECT_EQ(out.channels(), 32);
  EXPECT_MORAI_ERROR(net.forward(Volume(40, 15, 31)), ErrorCode::kShapeMismatch);
}

TEST(Network, OutputAtIsBitwiseForward) {
  std::mt19937_64 rng(9);
  for (int radius : {0, 1}) {
    auto net = Network::create(agent_architecture(radius), 5);
    auto in = to_tensor(oracle::random_window(rng, 0.2));
    auto out = net.forward(in);
    for (int k = 0; k < 30; ++k) {
      int x = rng() % 40, y = rng() % 15, t = rng() % 32;
      EXPECT_EQ(net.output_at(in, x, y, t), out.at(x, y, t));
    }
  }
}

TEST(Network, DeterministicInit) {
  auto a = Network::create(agent_architecture(), 42);
  auto b = Network::create(agent_architecture(), 42);
  auto c = Network::create(agent_architecture(), 43);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  for (const auto& block : a.parameters())
    for (double v : block) EXPECT_TRUE(std::isfinite(v));
}

TEST(Checkpoint, RoundTrip) {
  auto net = Network::create(scaled_down_architecture(), 3);
  auto g = oracle::grad_instance(3);
  auto adam = AdamState::with_lr(0.01);
  Volume mask(8, 6, 4, 1.0);
  adam_step(net, backward(net, g.input, g.target, mask).gradients, adam);
  std::stringstream buf;
  write_checkpoint(buf, net, &adam);
  auto ck = read_checkpoint(buf, scaled_down_architecture());
  EXPECT_EQ(ck.network.fingerprint(), net.fingerprint());
  ASSERT_TRUE(ck.adam);
  EXPECT_EQ(ck.adam->step_count, 1);
  EXPECT_EQ(ck.adam->first_moment, adam.first_moment);
  EXPECT_EQ(ck.adam->lr, 0.01);
}

TEST(Checkpoint, RejectsMismatchAndGarbage) {
  auto net = Network::create(scaled_down_architecture(), 3);
  std::stringstream buf;
  write_checkpoint(buf, net, nullptr);
  auto bytes = buf.str();
  std::stringstream a(bytes);
  EXPECT_MORAI_ERROR(read_checkpoint(a, agent_architecture()), ErrorCode::kBadCheckpoint);
  std::stringstream b(bytes.substr(0, bytes.size() / 2));
  EXPECT_MORAI_ERROR(read_checkpoint(b), ErrorCode::kBadCheckpoint);
  std::stringstream c("NOTANETxxxxxxxx");
  EXPECT_MORAI_ERROR(read_checkpoint(c), ErrorCode::kBadCheckpoint);
}

TEST(Network, CellKernelsMatchElements) {
  std::mt19937_64 rng(13);
  auto net = Network::create(agent_architecture(1), 6);
  auto in = to_tensor(oracle::random_window(rng, 0.3));
  auto trace = net.trace(in);
  for (int k = 0; k < 50; ++k) {
    int x = rng() % 40, y = rng() % 15;
    std::vector<double> cell(32);
    for (std::size_t l = 0; l < net.convs().size(); ++l) {
      const Volume& src = l == 0 ? in : trace.post[l - 1];
      net.convs()[l].cell(src, x, y, cell.data());
      for (int f = 0; f < net.convs()[l].filter_count; ++f) EXPECT_EQ(cell[f], net.convs()[l].element(src, x, y, f));
    }
    net.head().cell(trace.post[2], x, y, cell.data());
    for (int t = 0; t < 32; ++t) EXPECT_EQ(cell[t], net.head().element(trace.post[2], x, y, t));
  }
}

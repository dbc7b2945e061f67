#include <gtest/gtest.h>

#include "cfrl/adam.hpp"
#include "cfrl/checkpoint.hpp"
#include "cfrl/mlp.hpp"
#include "cfrl/rng.hpp"
#include "oracle.hpp"

using namespace cfrl;

namespace {

MlpNet random_net(const MlpSpec& spec, std::uint64_t seed) { return make_mlp(spec, seed); }

}  // namespace

TEST(Mlp, ZeroNetForwardsToZero) {
  MlpNet net = make_mlp(MlpSpec{{3, 5, 2}, Activation::Linear}, 7);
  for (auto& w : net.weights) w.setZero();
  Rng rng(1);
  Eigen::MatrixXd x(3, 4);
  rng.fill_uniform_pm1(x);
  EXPECT_EQ(forward(net, x).cwiseAbs().maxCoeff(), 0.0);

  net.spec.output_activation = Activation::Tanh;
  EXPECT_EQ(forward(net, x).cwiseAbs().maxCoeff(), 0.0);  // tanh(0) = 0
}

TEST(Mlp, RectifierClampsNegativePreActivations) {
  // Identity-padded single hidden layer: hidden = relu(x), output = hidden.
  MlpNet net = make_mlp(MlpSpec{{2, 2, 2}, Activation::Linear}, 3);
  net.weights[0] = Eigen::MatrixXd::Identity(2, 2);
  net.weights[1] = Eigen::MatrixXd::Identity(2, 2);
  net.biases[0].setZero();
  net.biases[1].setZero();
  Eigen::MatrixXd x(2, 1);
  x << -1.5, 2.0;
  const Eigen::MatrixXd y = forward(net, x);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_EQ(y(1, 0), 2.0);
}

TEST(Mlp, ForwardMatchesNaivePerSampleEvaluation) {
  const MlpSpec spec{{6, 9, 8, 4}, Activation::Tanh};
  const MlpNet net = random_net(spec, 11);
  Rng rng(12);
  Eigen::MatrixXd x(6, 17);
  rng.fill_uniform_pm1(x);
  const Eigen::MatrixXd got = forward(net, x);
  const Eigen::MatrixXd want = oracle::naive_mlp_forward(net, x);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mlp, ForwardIsDeterministic) {
  const MlpNet net = random_net(MlpSpec{{5, 7, 3}, Activation::Tanh}, 21);
  Rng rng(22);
  Eigen::MatrixXd x(5, 9);
  rng.fill_uniform_pm1(x);
  const Eigen::MatrixXd a = forward(net, x);
  const Eigen::MatrixXd b = forward(net, x);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Mlp, ForwardRejectsWrongInputWidth) {
  const MlpNet net = random_net(MlpSpec{{5, 7, 3}, Activation::Linear}, 2);
  EXPECT_THROW(forward(net, Eigen::MatrixXd::Zero(4, 2)), std::invalid_argument);
}

TEST(Mlp, BackwardZeroSeedGivesZeroGradients) {
  const MlpNet net = random_net(MlpSpec{{4, 6, 3}, Activation::Linear}, 5);
  Rng rng(6);
  Eigen::MatrixXd x(4, 8);
  rng.fill_uniform_pm1(x);
  ForwardCache cache;
  forward(net, x, &cache);
  const BackwardResult r = backward(net, cache, Eigen::MatrixXd::Zero(3, 8));
  for (const auto& g : r.grads.dw) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& g : r.grads.db) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.dx.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, BackwardLinearChainRule) {
  // All pre-activations positive, so the rectifiers act as identity and the
  // network is the plain product of its weight matrices.
  MlpNet net = random_net(MlpSpec{{3, 4, 4, 2}, Activation::Linear}, 8);
  for (auto& w : net.weights) w = w.cwiseAbs();
  Eigen::MatrixXd x(3, 1);
  x << 0.3, 0.7, 0.2;
  ForwardCache cache;
  forward(net, x, &cache);
  const Eigen::MatrixXd prod = net.weights[2] * net.weights[1] * net.weights[0];
  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(2, 1);
    dy(i, 0) = 1.0;
    const Eigen::MatrixXd dx = backward_input(net, cache, dy);
    EXPECT_LT((dx - prod.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  for (const MlpSpec spec : {MlpSpec{{4, 6, 3}, Activation::Linear},
                             MlpSpec{{5, 7, 6, 2}, Activation::Tanh}}) {
    const MlpNet net = random_net(spec, 31 + spec.n_layers());
    Rng rng(32);
    Eigen::MatrixXd x(spec.input_size(), 5);
    rng.fill_uniform_pm1(x);
    Eigen::MatrixXd dy(spec.output_size(), 5);
    rng.fill_uniform_pm1(dy);

    ForwardCache cache;
    forward(net, x, &cache);
    const BackwardResult r = backward(net, cache, dy);

    const MlpGradients fd = oracle::fd_param_grads(net, x, dy);
    for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
      EXPECT_LT(oracle::max_rel_err(r.grads.dw[l], fd.dw[l], 1e-9), 1e-5);
      EXPECT_LT(oracle::max_rel_err(r.grads.db[l], fd.db[l], 1e-9), 1e-5);
    }
    EXPECT_LT(oracle::max_rel_err(r.dx, oracle::fd_input_grads(net, x, dy), 1e-9), 1e-5);
  }
}

TEST(Mlp, BackwardRejectsMismatchedCache) {
  const MlpNet net = random_net(MlpSpec{{4, 6, 3}, Activation::Linear}, 9);
  const MlpNet other = random_net(MlpSpec{{4, 5, 3}, Activation::Linear}, 9);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 2);
  ForwardCache cache;
  forward(other, x, &cache);
  EXPECT_THROW(backward(net, cache, Eigen::MatrixXd::Ones(3, 2)), std::invalid_argument);
  ForwardCache good;
  forward(net, x, &good);
  EXPECT_THROW(backward(net, good, Eigen::MatrixXd::Ones(3, 5)), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  MlpNet net = random_net(MlpSpec{{3, 4, 2}, Activation::Linear}, 13);
  const MlpNet before = net;
  AdamState state = make_adam(net);
  ASSERT_TRUE(adam_step(net, zero_gradients(net), state, 0.001));
  EXPECT_EQ(state.step, 1);
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l)
    EXPECT_TRUE((net.weights[l].array() == before.weights[l].array()).all());
}

TEST(Adam, HandComputedFirstStep) {
  // Scalar parameter w = 0, gradient 1, eta = 1e-3: bias correction makes the
  // first step w -> -eta * 1/(1 + eps), i.e. -0.001 up to eps.
  MlpNet net;
  net.spec = MlpSpec{{1, 1, 1}, Activation::Linear};
  net.weights = {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1)};
  net.biases = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  AdamState state = make_adam(net);
  MlpGradients g = zero_gradients(net);
  g.dw[0](0, 0) = 1.0;
  ASSERT_TRUE(adam_step(net, g, state, 0.001));
  EXPECT_NEAR(net.weights[0](0, 0), -0.001, 1e-8);
  EXPECT_EQ(net.weights[1](0, 0), 0.0);
}

TEST(Adam, IdenticalGradientHistoriesGiveIdenticalUpdates) {
  MlpNet net;
  net.spec = MlpSpec{{2, 2, 2}, Activation::Linear};
  net.weights = {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
  net.biases = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  AdamState state = make_adam(net);
  for (int step = 0; step < 5; ++step) {
    MlpGradients g = zero_gradients(net);
    g.dw[0](0, 0) = 0.3 * (step + 1);
    g.dw[1](1, 1) = 0.3 * (step + 1);
    ASSERT_TRUE(adam_step(net, g, state, 0.01));
  }
  EXPECT_DOUBLE_EQ(net.weights[0](0, 0), net.weights[1](1, 1));
}

TEST(Adam, ZeroRateLeavesParametersUnchanged) {
  MlpNet net = random_net(MlpSpec{{3, 4, 2}, Activation::Linear}, 14);
  const MlpNet before = net;
  AdamState state = make_adam(net);
  MlpGradients g = zero_gradients(net);
  g.dw[0].setConstant(1.0);
  ASSERT_TRUE(adam_step(net, g, state, 0.0));
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l)
    EXPECT_TRUE((net.weights[l].array() == before.weights[l].array()).all());
}

TEST(Adam, NonFiniteGradientSkipsAndFlags) {
  MlpNet net = random_net(MlpSpec{{3, 4, 2}, Activation::Linear}, 15);
  const MlpNet before = net;
  AdamState state = make_adam(net);
  MlpGradients g = zero_gradients(net);
  g.dw[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(adam_step(net, g, state, 0.001));
  EXPECT_EQ(state.step, 0);
  EXPECT_EQ(state.skipped, 1);
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l)
    EXPECT_TRUE((net.weights[l].array() == before.weights[l].array()).all());
}

TEST(ParamCount, ReproducesPublishedPolicySizes) {
  EXPECT_EQ(param_count(MlpSpec{{10, 12, 12, 2}, Activation::Tanh}), 314);
  EXPECT_EQ(param_count(MlpSpec{{30, 12, 12, 2}, Activation::Tanh}), 554);
  EXPECT_EQ(param_count(MlpSpec{{100, 24, 24, 4}, Activation::Tanh}), 3124);
  EXPECT_EQ(param_count(MlpSpec{{100, 4, 4, 4}, Activation::Tanh}), 444);
}

TEST(ParamCount, EqualsScalarsMovedByAdam) {
  const MlpSpec spec{{5, 8, 7, 2}, Activation::Tanh};
  MlpNet net = random_net(spec, 16);
  const MlpNet before = net;
  AdamState state = make_adam(net);
  MlpGradients g = zero_gradients(net);
  for (auto& m : g.dw) m.setConstant(1.0);
  for (auto& v : g.db) v.setConstant(1.0);
  ASSERT_TRUE(adam_step(net, g, state, 0.001));
  long moved = 0;
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
    moved += (net.weights[l].array() != before.weights[l].array()).count();
    moved += (net.biases[l].array() != before.biases[l].array()).count();
  }
  EXPECT_EQ(moved, param_count(spec));
}

TEST(Checkpoint, NetworkRoundTripsBitExact) {
  const MlpNet net = random_net(MlpSpec{{6, 9, 8, 4}, Activation::Tanh}, 17);
  const MlpNet back = mlp_from_json(Json::parse(to_json(net).dump()));
  ASSERT_EQ(back.spec, net.spec);
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
    EXPECT_TRUE((back.weights[l].array() == net.weights[l].array()).all());
    EXPECT_TRUE((back.biases[l].array() == net.biases[l].array()).all());
  }
}

TEST(Checkpoint, AdamStateRoundTrips) {
  MlpNet net = random_net(MlpSpec{{3, 5, 2}, Activation::Linear}, 18);
  AdamState state = make_adam(net);
  MlpGradients g = zero_gradients(net);
  g.dw[0].setConstant(0.25);
  adam_step(net, g, state, 0.01);
  const AdamState back = adam_from_json(Json::parse(to_json(state).dump()));
  EXPECT_EQ(back.step, state.step);
  EXPECT_TRUE((back.mw[0].array() == state.mw[0].array()).all());
  EXPECT_TRUE((back.vw[0].array() == state.vw[0].array()).all());
}

TEST(MlpSpec, ValidationRejectsDegenerateShapes) {
  EXPECT_THROW((MlpSpec{{3, 2}, Activation::Linear}.validate()), std::invalid_argument);
  EXPECT_THROW((MlpSpec{{3, 0, 2}, Activation::Linear}.validate()), std::invalid_argument);
  EXPECT_THROW((MlpSpec{{3, 4, 2}, Activation::Relu}.validate()), std::invalid_argument);
}

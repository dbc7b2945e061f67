#include <gtest/gtest.h>

#include "cfrl/env.hpp"
#include "cfrl/rng.hpp"
#include "oracle.hpp"

using namespace cfrl;

namespace {

TaskSpec spec_of(int n_s, int n_c, int n_cc, DynamicsKind kind, std::uint64_t seed,
                 double sigma = 0.0) {
  TaskSpec s;
  s.n_s = n_s;
  s.n_c = n_c;
  s.n_cc = n_cc;
  s.dynamics = kind;
  s.noise_sigma = sigma;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Envgen, ActionDimensionIsHalfOfCostRelevantElements) {
  EXPECT_EQ(make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 1)).n_a(), 2);
  EXPECT_EQ(make_task(spec_of(100, 2, 8, DynamicsKind::Linear, 1)).n_a(), 4);
}

TEST(Envgen, SameSeedSameEnvironment) {
  const Environment a = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 42));
  const Environment b = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 42));
  EXPECT_TRUE((a.lin_a.array() == b.lin_a.array()).all());
  EXPECT_TRUE((a.lin_g.array() == b.lin_g.array()).all());
  const Environment c = make_task(spec_of(10, 1, 4, DynamicsKind::TanhNet, 42));
  const Environment d = make_task(spec_of(10, 1, 4, DynamicsKind::TanhNet, 42));
  EXPECT_TRUE((c.rel_net.w1.array() == d.rel_net.w1.array()).all());
  EXPECT_TRUE((c.dist_net.w2.array() == d.dist_net.w2.array()).all());
}

TEST(Envgen, RejectsInvalidDimensions) {
  EXPECT_THROW(make_task(spec_of(9, 1, 4, DynamicsKind::Linear, 1)), std::invalid_argument);
  EXPECT_THROW(make_task(spec_of(10, 1, 3, DynamicsKind::Linear, 1)), std::invalid_argument);
  EXPECT_THROW(make_task(spec_of(10, 3, 4, DynamicsKind::Linear, 1)), std::invalid_argument);
  EXPECT_THROW(make_task(spec_of(4, 1, 6, DynamicsKind::Linear, 1)), std::invalid_argument);
}

TEST(Envgen, OriginIsAFixedPointOfLinearDynamics) {
  const Environment env = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 7));
  const Eigen::MatrixXd s = Eigen::MatrixXd::Zero(10, 3);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_EQ(step(env, s, a).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Envgen, PositionsFrozenWhenVelocityAndAccelerationVanish) {
  Environment env = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 8));
  env.lin_a.setZero();
  env.lin_g.setZero();
  Rng rng(9);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(10, 5);
  rng.fill_uniform_pm1(s.topRows(5));  // positions only, v = 0
  const Eigen::MatrixXd next = step(env, s, Eigen::MatrixXd::Zero(2, 5));
  EXPECT_TRUE((next.array() == s.array()).all());
}

TEST(Envgen, SecondOrderStructureIsExact) {
  for (const DynamicsKind kind : {DynamicsKind::Linear, DynamicsKind::TanhNet}) {
    const Environment env = make_task(spec_of(10, 1, 4, kind, 10));
    Rng rng(11);
    Eigen::MatrixXd s(10, 6), a(2, 6);
    rng.fill_uniform_pm1(s);
    rng.fill_uniform_pm1(a);
    const Eigen::MatrixXd f = dynamics(env, s, a);
    EXPECT_TRUE((f.topRows(5).array() == s.bottomRows(5).array()).all());
    const Eigen::MatrixXd next = step(env, s, a);
    EXPECT_TRUE((next.array() == (s + env.dt * f).array()).all());
  }
}

TEST(Envgen, RelevantTrajectoryIgnoresIrrelevantInitialState) {
  for (const DynamicsKind kind : {DynamicsKind::Linear, DynamicsKind::TanhNet}) {
    const Environment env = make_task(spec_of(10, 1, 4, kind, 12));
    const int na = env.n_a();
    const int nq = env.n_q();
    Rng rng(13);
    Eigen::MatrixXd s0(10, 1);
    rng.fill_uniform_pm1(s0);
    Eigen::MatrixXd s1 = s0;
    s1(na, 0) += 0.37;       // an irrelevant position
    s1(nq + na, 0) -= 0.21;  // an irrelevant velocity

    // Fixed open-loop action sequence, shared by both simulations.
    std::vector<Eigen::MatrixXd> actions;
    for (int t = 0; t < env.n_steps(); ++t) {
      Eigen::MatrixXd a(na, 1);
      rng.fill_uniform_pm1(a);
      actions.push_back(a);
    }
    Eigen::MatrixXd x = s0, y = s1;
    for (int t = 0; t < env.n_steps(); ++t) {
      x = step(env, x, actions[t]);
      y = step(env, y, actions[t]);
      EXPECT_LT((x.topRows(na) - y.topRows(na)).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_LT((x.middleRows(nq, na) - y.middleRows(nq, na)).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(Envgen, CostRateAtTargetIsZero) {
  const Environment env = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 14));
  EXPECT_EQ(cost_rate(env, Eigen::MatrixXd::Zero(10, 2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Envgen, CostRateSaturatesOnUnitRelevantElement) {
  const Environment env = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 15));
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(10, 1);
  s(0, 0) = 1.0;
  EXPECT_NEAR(cost_rate(env, s)(0), std::tanh(10.0), 1e-15);
}

TEST(Envgen, CostRateIgnoresElementsPastNc) {
  const Environment env = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 16));
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(10, 1);
  for (int i = 1; i < 10; ++i) s(i, 0) = 2.0;
  EXPECT_EQ(cost_rate(env, s)(0), 0.0);
}

TEST(Envgen, CprimeRelatesToCostRateThroughTanh) {
  const Environment env = make_task(spec_of(10, 1, 4, DynamicsKind::Linear, 17));
  Rng rng(18);
  Eigen::MatrixXd s(10, 7);
  rng.fill_uniform_pm1(s);
  const Eigen::RowVectorXd cp = cprime(env, s);
  EXPECT_TRUE((cp.array() >= 0.0).all());
  EXPECT_LT((cp.array().tanh() - cost_rate(env, s).array()).abs().maxCoeff(), 1e-15);
  EXPECT_LT((cprime(env, 2.0 * s).array() - 4.0 * cp.array()).abs().maxCoeff(), 1e-12);
}

TEST(Envgen, CostGradMatchesFiniteDifferences) {
  const Environment env = make_task(spec_of(10, 2, 6, DynamicsKind::Linear, 19));
  Rng rng(20);
  Eigen::MatrixXd s(10, 3);
  rng.fill_uniform_pm1(s);
  const Eigen::MatrixXd g = cost_grad(env, s);
  const double h = 1e-6;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 10; ++r) {
      Eigen::MatrixXd up = s, down = s;
      up(r, c) += h;
      down(r, c) -= h;
      const double fd = (cost_rate(env, up)(c) - cost_rate(env, down)(c)) / (2 * h);
      EXPECT_LT(oracle::rel_err(g(r, c), fd, 1e-10), 1e-6);
    }
  EXPECT_EQ(cost_grad(env, Eigen::MatrixXd::Zero(10, 1)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.bottomRows(8).cwiseAbs().maxCoeff(), 0.0);  // zero past n_c
}

TEST(Envgen, DynamicsVjpMatchesExplicitJacobians) {
  for (const DynamicsKind kind : {DynamicsKind::Linear, DynamicsKind::TanhNet}) {
    const Environment env = make_task(spec_of(8, 1, 4, kind, 21));
    Rng rng(22);
    Eigen::MatrixXd s(8, 1), a(2, 1), lam(8, 1);
    rng.fill_uniform_pm1(s);
    rng.fill_uniform_pm1(a);
    rng.fill_uniform_pm1(lam);
    Eigen::MatrixXd ds, da;
    dynamics_vjp(env, s, a, lam, &ds, &da);
    Eigen::MatrixXd jf_s, jf_a;
    oracle::env_jacobians(env, s.col(0), a.col(0), &jf_s, &jf_a);
    EXPECT_LT((ds - jf_s.transpose() * lam).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((da - jf_a.transpose() * lam).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Envgen, NoisyStepsAverageToDeterministicStep) {
  const double sigma = 0.5;
  const Environment env = make_task(spec_of(6, 1, 2, DynamicsKind::Linear, 23, sigma));
  Rng rng(24);
  Eigen::MatrixXd s(6, 1), a(1, 1);
  rng.fill_uniform_pm1(s);
  rng.fill_uniform_pm1(a);

  Environment quiet = env;
  quiet.spec.noise_sigma = 0.0;
  const Eigen::MatrixXd expected = step(quiet, s, a);

  const int n = 10000;
  const Eigen::MatrixXd s_rep = s.replicate(1, n);
  const Eigen::MatrixXd a_rep = a.replicate(1, n);
  const Eigen::VectorXd mean = step(env, s_rep, a_rep, &rng).rowwise().mean();
  const double tol = 3.0 * sigma * env.dt / std::sqrt(static_cast<double>(n));
  EXPECT_LT((mean - expected.col(0)).cwiseAbs().maxCoeff(), tol);
}

TEST(Envgen, StepCallsAreCounted) {
  const Environment env = make_task(spec_of(6, 1, 2, DynamicsKind::Linear, 25));
  const Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6, 2);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, 2);
  EXPECT_EQ(env.step_calls, 0);
  step(env, s, a);
  step(env, s, a);
  EXPECT_EQ(env.step_calls, 2);
  dynamics(env, s, a);  // a model query, not an interaction
  EXPECT_EQ(env.step_calls, 2);
}

TEST(Envgen, LinearSpectralNormIsBounded) {
  const Environment env = make_task(spec_of(100, 2, 8, DynamicsKind::Linear, 26));
  EXPECT_LE(env.lin_a.jacobiSvd().singularValues()(0), 1.5 + 1e-9);
}

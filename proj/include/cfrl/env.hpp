#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "cfrl/mlp.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

enum class DynamicsKind { Linear, TanhNet };

inline std::string to_string(DynamicsKind k) {
  return k == DynamicsKind::Linear ? "linear" : "tanh_net";
}

inline DynamicsKind dynamics_kind_from_string(const std::string& s) {
  if (s == "linear") return DynamicsKind::Linear;
  if (s == "tanh_net" || s == "tanh-net" || s == "tanhnet") return DynamicsKind::TanhNet;
  throw std::invalid_argument("unknown dynamics kind: " + s);
}

struct TaskSpec {
  int n_s = 10;   // state dimension, even: [positions; velocities]
  int n_c = 1;    // state elements read by the cost-rate
  int n_cc = 4;   // state elements that influence total cost (n_C), even
  DynamicsKind dynamics = DynamicsKind::Linear;
  double noise_sigma = 0.0;  // acceleration noise std
  std::uint64_t seed = 0;

  int n_q() const { return n_s / 2; }
  int n_a() const { return n_cc / 2; }

  void validate() const {
    if (n_s < 2 || n_s % 2 != 0) throw std::invalid_argument("n_s must be even and >= 2");
    if (n_cc < 2 || n_cc % 2 != 0 || n_cc > n_s)
      throw std::invalid_argument("n_C must be even, >= 2, and <= n_s");
    if (n_c < 1 || n_c > n_cc / 2)
      throw std::invalid_argument("n_c must satisfy 1 <= n_c <= n_C/2");
    if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  }
};

// One hidden tanh layer; used for the nonlinear acceleration functions.
struct EnvTanhNet {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
  double gain = 1.0;

  Eigen::MatrixXd value(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = w1 * x;
    h.colwise() += b1;
    h = h.array().tanh().matrix();
    Eigen::MatrixXd y = w2 * h;
    y.colwise() += b2;
    return gain * y;
  }

  // (d value/d x)^T * lam, per column.
  Eigen::MatrixXd vjp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& lam) const {
    Eigen::MatrixXd h = w1 * x;
    h.colwise() += b1;
    const Eigen::ArrayXXd dtanh = 1.0 - h.array().tanh().square();
    const Eigen::MatrixXd u = ((w2.transpose() * lam).array() * dtanh).matrix();
    return gain * (w1.transpose() * u);
  }
};

// A randomized second-order mechanical system. The state is [q; v] and one
// Euler step moves it by dt*[v; accel(s,a) + sigma*noise]. The first n_a
// acceleration rows read only the cost-relevant elements (q_1..q_{n_a},
// v_1..v_{n_a}) and the actions, so the relevant subsystem is closed; the
// remaining rows may read the full state.
struct Environment {
  TaskSpec spec;
  double dt = 0.1;
  double horizon = 3.0;

  // linear dynamics: accel = lin_a * s + lin_g * a
  Eigen::MatrixXd lin_a, lin_g;

  // nonlinear dynamics: relevant rows from rel_net([q_rel; v_rel; a]),
  // distractor rows from dist_net([s; a])
  EnvTanhNet rel_net, dist_net;

  Eigen::VectorXd b_diag;  // cost matrix diagonal: first n_c entries 10

  mutable long step_calls = 0;

  int n_s() const { return spec.n_s; }
  int n_q() const { return spec.n_q(); }
  int n_a() const { return spec.n_a(); }
  int n_steps() const { return static_cast<int>(std::lround(horizon / dt)); }
  int n_points() const { return n_steps() + 1; }
};

namespace detail {

inline Eigen::MatrixXd relevant_inputs(const Environment& env, const Eigen::MatrixXd& s,
                                       const Eigen::MatrixXd& a) {
  const int na = env.n_a();
  Eigen::MatrixXd x(3 * na, s.cols());
  x.topRows(na) = s.topRows(na);                    // q_rel
  x.middleRows(na, na) = s.middleRows(env.n_q(), na);  // v_rel
  x.bottomRows(na) = a;
  return x;
}

}  // namespace detail

inline Eigen::MatrixXd accel(const Environment& env, const Eigen::MatrixXd& s,
                             const Eigen::MatrixXd& a) {
  if (s.rows() != env.n_s() || a.rows() != env.n_a() || s.cols() != a.cols())
    throw std::invalid_argument("accel: shape mismatch");
  if (env.spec.dynamics == DynamicsKind::Linear) return env.lin_a * s + env.lin_g * a;
  const int na = env.n_a();
  const int nq = env.n_q();
  Eigen::MatrixXd out(nq, s.cols());
  out.topRows(na) = env.rel_net.value(detail::relevant_inputs(env, s, a));
  if (nq > na) {
    Eigen::MatrixXd x(env.n_s() + na, s.cols());
    x.topRows(env.n_s()) = s;
    x.bottomRows(na) = a;
    out.bottomRows(nq - na) = env.dist_net.value(x);
  }
  return out;
}

// The true state dynamics f(s,a) = [v; accel(s,a)], queried without noise.
inline Eigen::MatrixXd dynamics(const Environment& env, const Eigen::MatrixXd& s,
                                const Eigen::MatrixXd& a) {
  Eigen::MatrixXd f(env.n_s(), s.cols());
  f.topRows(env.n_q()) = s.bottomRows(env.n_q());
  f.bottomRows(env.n_q()) = accel(env, s, a);
  return f;
}

// One Euler step of the real environment. Counts as an environment
// interaction; pass rng to sample acceleration noise when sigma > 0.
inline Eigen::MatrixXd step(const Environment& env, const Eigen::MatrixXd& s,
                            const Eigen::MatrixXd& a, Rng* rng = nullptr) {
  ++env.step_calls;
  Eigen::MatrixXd f = dynamics(env, s, a);
  if (env.spec.noise_sigma > 0.0) {
    if (!rng) throw std::invalid_argument("step: stochastic task needs an rng");
    Eigen::MatrixXd xi(env.n_q(), s.cols());
    rng->fill_normal(xi);
    f.bottomRows(env.n_q()) += env.spec.noise_sigma * xi;
  }
  return s + env.dt * f;
}

// c'(s) = s^T B s, per column.
inline Eigen::RowVectorXd cprime(const Environment& env, const Eigen::MatrixXd& s) {
  if (s.rows() != env.n_s()) throw std::invalid_argument("cprime: shape mismatch");
  return (s.array().square().colwise() * env.b_diag.array()).colwise().sum();
}

// Cost-rate c(s) = tanh(s^T B s), in [0, 1).
inline Eigen::RowVectorXd cost_rate(const Environment& env, const Eigen::MatrixXd& s) {
  return cprime(env, s).array().tanh();
}

// Exact gradient dc/ds = (1 - tanh(c')^2) * 2 B s. dc/da is identically zero
// for this cost family.
inline Eigen::MatrixXd cost_grad(const Environment& env, const Eigen::MatrixXd& s) {
  const Eigen::RowVectorXd cp = cprime(env, s);
  const Eigen::RowVectorXd scale = 1.0 - cp.array().tanh().square();
  Eigen::MatrixXd g = 2.0 * (s.array().colwise() * env.b_diag.array()).matrix();
  return g.array().rowwise() * scale.array();
}

// Exact vector-Jacobian products of f: ds = (df/ds)^T lam, da = (df/da)^T lam.
inline void dynamics_vjp(const Environment& env, const Eigen::MatrixXd& s,
                         const Eigen::MatrixXd& a, const Eigen::MatrixXd& lam,
                         Eigen::MatrixXd* ds, Eigen::MatrixXd* da) {
  const int nq = env.n_q();
  const int na = env.n_a();
  const Eigen::MatrixXd lam_q = lam.topRows(nq);
  const Eigen::MatrixXd lam_v = lam.bottomRows(nq);
  ds->setZero(env.n_s(), s.cols());
  da->setZero(na, s.cols());
  ds->bottomRows(nq) = lam_q;  // d[v-part of f_q]/dv = I
  if (env.spec.dynamics == DynamicsKind::Linear) {
    *ds += env.lin_a.transpose() * lam_v;
    *da += env.lin_g.transpose() * lam_v;
    return;
  }
  const Eigen::MatrixXd rel_back =
      env.rel_net.vjp(detail::relevant_inputs(env, s, a), lam_v.topRows(na));
  ds->topRows(na) += rel_back.topRows(na);
  ds->middleRows(nq, na) += rel_back.middleRows(na, na);
  *da += rel_back.bottomRows(na);
  if (nq > na) {
    Eigen::MatrixXd x(env.n_s() + na, s.cols());
    x.topRows(env.n_s()) = s;
    x.bottomRows(na) = a;
    const Eigen::MatrixXd dist_back = env.dist_net.vjp(x, lam_v.bottomRows(nq - na));
    *ds += dist_back.topRows(env.n_s());
    *da += dist_back.bottomRows(na);
  }
}

namespace detail {

inline EnvTanhNet make_env_tanh_net(int in, int hidden, int out, double gain, Rng& rng) {
  EnvTanhNet net;
  const double bound1 = std::sqrt(6.0 / (in + hidden));
  const double bound2 = std::sqrt(6.0 / (hidden + out));
  net.w1.resize(hidden, in);
  net.w2.resize(out, hidden);
  for (Eigen::Index c = 0; c < net.w1.cols(); ++c)
    for (Eigen::Index r = 0; r < net.w1.rows(); ++r) net.w1(r, c) = bound1 * rng.uniform_pm1();
  for (Eigen::Index c = 0; c < net.w2.cols(); ++c)
    for (Eigen::Index r = 0; r < net.w2.rows(); ++r) net.w2(r, c) = bound2 * rng.uniform_pm1();
  net.b1 = Eigen::VectorXd::Zero(hidden);
  net.b2 = Eigen::VectorXd::Zero(out);
  net.gain = gain;
  return net;
}

}  // namespace detail

inline Environment make_task(const TaskSpec& spec) {
  spec.validate();
  Environment env;
  env.spec = spec;
  const int nq = spec.n_q();
  const int na = spec.n_a();
  Rng rng(substream(spec.seed, "envgen"));

  env.b_diag = Eigen::VectorXd::Zero(spec.n_s);
  env.b_diag.head(spec.n_c).setConstant(10.0);

  if (spec.dynamics == DynamicsKind::Linear) {
    env.lin_a.resize(nq, spec.n_s);
    env.lin_g.resize(nq, na);
    rng.fill_normal(env.lin_a);
    rng.fill_normal(env.lin_g);
    // Closure of the relevant subsystem: rows < n_a read only q_rel, v_rel.
    for (int r = 0; r < na; ++r)
      for (int c = 0; c < spec.n_s; ++c) {
        const bool q_rel = c < na;
        const bool v_rel = c >= nq && c < nq + na;
        if (!q_rel && !v_rel) env.lin_a(r, c) = 0.0;
      }
    // Keep trajectories bounded over the horizon.
    const double norm = env.lin_a.jacobiSvd().singularValues()(0);
    if (norm > 1.5) env.lin_a *= 1.5 / norm;
  } else {
    const double gain = 5.0;
    env.rel_net = detail::make_env_tanh_net(3 * na, spec.n_s, na, gain, rng);
    if (nq > na)
      env.dist_net = detail::make_env_tanh_net(spec.n_s + na, spec.n_s, nq - na, gain, rng);
  }
  return env;
}

}  // namespace cfrl

#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "cfrl/adam.hpp"
#include "cfrl/env.hpp"
#include "cfrl/learner.hpp"
#include "cfrl/mlp.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

struct DdpgConfig {
  double eta_q = 3e-4;
  double eta_mu = 1e-4;
  double tau = 3e-4;  // target-network nudge
  int batch = 64;
  int buffer_capacity = 1000000;
  double gamma = 1.0;  // undiscounted finite-horizon cost
  // Gaussian exploration noise, decaying linearly across the run.
  double sigma_start = 0.2;
  double sigma_end = 0.05;
  bool ou_noise = false;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  int n_m = 100;
};

// FIFO ring of (s, a, step_cost, s', terminal) tuples. Storage grows on
// demand up to the configured capacity.
class DdpgReplay {
 public:
  DdpgReplay() = default;
  DdpgReplay(int n_s, int n_a, int capacity) : n_s_(n_s), n_a_(n_a), capacity_(capacity) {}

  void push(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
            const Eigen::RowVectorXd& step_cost, const Eigen::MatrixXd& s2, bool terminal) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (head_ >= allocated_) grow();
      s_.col(head_) = s.col(j);
      a_.col(head_) = a.col(j);
      c_(head_) = step_cost(j);
      s2_.col(head_) = s2.col(j);
      terminal_[head_] = terminal ? 1 : 0;
      head_ = (head_ + 1) % capacity_;
      if (size_ < capacity_) ++size_;
    }
  }

  int size() const { return size_; }

  void sample(int batch, Rng& rng, Eigen::MatrixXd* s, Eigen::MatrixXd* a,
              Eigen::RowVectorXd* c, Eigen::MatrixXd* s2, Eigen::RowVectorXd* term) const {
    s->resize(n_s_, batch);
    a->resize(n_a_, batch);
    c->resize(batch);
    s2->resize(n_s_, batch);
    term->resize(batch);
    for (int j = 0; j < batch; ++j) {
      const int i = static_cast<int>(rng.uniform() * size_);
      s->col(j) = s_.col(i);
      a->col(j) = a_.col(i);
      (*c)(j) = c_(i);
      s2->col(j) = s2_.col(i);
      (*term)(j) = terminal_[i] ? 1.0 : 0.0;
    }
  }

 private:
  void grow() {
    const int target = std::min(capacity_, std::max(4096, allocated_ * 2));
    s_.conservativeResize(n_s_, target);
    a_.conservativeResize(n_a_, target);
    c_.conservativeResize(target);
    s2_.conservativeResize(n_s_, target);
    terminal_.resize(target, 0);
    allocated_ = target;
  }

  Eigen::MatrixXd s_, a_, s2_;
  Eigen::RowVectorXd c_;
  std::vector<char> terminal_;
  int n_s_ = 0, n_a_ = 0;
  int capacity_ = 0;
  int allocated_ = 0;
  int size_ = 0;
  int head_ = 0;
};

struct DdpgAgent {
  DdpgConfig cfg;
  int n_s = 0, n_a = 0;
  MlpNet policy, q;                // mu and <Q>
  MlpNet target_policy, target_q;  // mu' and Q', moved only by the tau-nudge
  AdamState opt_policy, opt_q;
  DdpgReplay buffer;
  Eigen::MatrixXd ou_state;
};

inline DdpgAgent make_ddpg_agent(const DdpgConfig& cfg, MlpNet policy, const MlpSpec& q_spec,
                                 std::uint64_t seed) {
  DdpgAgent a;
  a.cfg = cfg;
  a.n_s = policy.spec.input_size();
  a.n_a = policy.spec.output_size();
  if (policy.spec.output_activation != Activation::Tanh)
    throw std::invalid_argument("ddpg policy output must be tanh-bounded");
  if (q_spec.input_size() != a.n_s + a.n_a || q_spec.output_size() != 1)
    throw std::invalid_argument("<Q> must map (s,a) to a scalar");
  a.policy = std::move(policy);
  a.q = make_mlp(q_spec, substream(seed, "q"));
  a.target_policy = a.policy;
  a.target_q = a.q;
  a.opt_policy = make_adam(a.policy);
  a.opt_q = make_adam(a.q);
  a.buffer = DdpgReplay(a.n_s, a.n_a, cfg.buffer_capacity);
  return a;
}

// a = clamp(mu(s) + noise, -1, 1).
inline Eigen::MatrixXd ddpg_act(const DdpgAgent& agent, const Eigen::MatrixXd& s,
                                const Eigen::MatrixXd& noise) {
  Eigen::MatrixXd a = forward(agent.policy, s) + noise;
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

inline void soft_update(MlpNet& target, const MlpNet& net, double tau) {
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
    target.weights[l] += tau * (net.weights[l] - target.weights[l]);
    target.biases[l] += tau * (net.biases[l] - target.biases[l]);
  }
}

// One critic regression step, one actor descent step, one target nudge.
// Costs are minimized: the critic regresses Q(s,a) <- c_step + gamma Q'(s',mu'(s'))
// and the actor walks mu down dQ/da. Returns false when the buffer is still
// smaller than the minibatch.
inline bool ddpg_update(DdpgAgent& agent, Rng& rng) {
  const DdpgConfig& cfg = agent.cfg;
  if (agent.buffer.size() < cfg.batch) return false;
  Eigen::MatrixXd s, a, s2;
  Eigen::RowVectorXd c, term;
  agent.buffer.sample(cfg.batch, rng, &s, &a, &c, &s2, &term);

  const Eigen::MatrixXd target_next =
      forward(agent.target_q, vstack(s2, forward(agent.target_policy, s2)));
  const Eigen::RowVectorXd y =
      c.array() + cfg.gamma * (1.0 - term.array()) * target_next.row(0).array();

  ForwardCache qcache;
  const Eigen::MatrixXd q_now = forward(agent.q, vstack(s, a), &qcache);
  const Eigen::MatrixXd err = q_now.row(0) - y;
  adam_step(agent.q, backward_params(agent.q, qcache, err), agent.opt_q, cfg.eta_q);

  ForwardCache mucache;
  const Eigen::MatrixXd mu_a = forward(agent.policy, s, &mucache);
  ForwardCache qcache2;
  forward(agent.q, vstack(s, mu_a), &qcache2);
  const Eigen::MatrixXd dq_din =
      backward_input(agent.q, qcache2, Eigen::MatrixXd::Ones(1, cfg.batch));
  const Eigen::MatrixXd dq_da = dq_din.bottomRows(agent.n_a);
  adam_step(agent.policy, backward_params(agent.policy, mucache, dq_da), agent.opt_policy,
            cfg.eta_mu);

  soft_update(agent.target_policy, agent.policy, cfg.tau);
  soft_update(agent.target_q, agent.q, cfg.tau);
  return true;
}

// Episodic training loop: each rollout is one 30-step movement minibatch,
// with one ddpg_update per time step.
inline void run_ddpg(DdpgAgent& agent, const Environment& env, Rng& rng, int n_rolls,
                     int eval_period, const EvalHook& hook = nullptr,
                     std::vector<RolloutRecord>* log = nullptr) {
  const DdpgConfig& cfg = agent.cfg;
  const int n = env.n_steps();
  if (hook) hook(0);
  for (int r = 1; r <= n_rolls; ++r) {
    const double frac = n_rolls > 1 ? static_cast<double>(r - 1) / (n_rolls - 1) : 0.0;
    const double sigma = cfg.sigma_start + frac * (cfg.sigma_end - cfg.sigma_start);

    Eigen::MatrixXd s(env.n_s(), cfg.n_m);
    rng.fill_uniform_pm1(s);
    agent.ou_state = Eigen::MatrixXd::Zero(agent.n_a, cfg.n_m);

    RolloutRecord rec;
    rec.rollout = r;
    double mean_cost = 0.0;
    for (int t = 0; t < n; ++t) {
      Eigen::MatrixXd noise(agent.n_a, cfg.n_m);
      rng.fill_normal(noise);
      if (cfg.ou_noise) {
        agent.ou_state += -cfg.ou_theta * agent.ou_state + cfg.ou_sigma * noise;
        noise = agent.ou_state;
      } else {
        noise *= sigma;
      }
      const Eigen::MatrixXd a = ddpg_act(agent, s, noise);
      const Eigen::MatrixXd s2 = step(env, s, a, &rng);
      if (!s2.allFinite()) {
        rec.diverged = true;
        break;
      }
      const Eigen::RowVectorXd step_cost = env.dt * cost_rate(env, s);
      mean_cost += step_cost.mean();
      agent.buffer.push(s, a, step_cost, s2, t == n - 1);
      ddpg_update(agent, rng);
      s = s2;
    }
    if (!rec.diverged) mean_cost += env.dt * cost_rate(env, s).mean();
    rec.mean_cost = mean_cost;
    if (log) log->push_back(rec);
    if (hook && r % eval_period == 0) hook(r);
  }
}

}  // namespace cfrl

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cfrl/adam.hpp"
#include "cfrl/env.hpp"
#include "cfrl/mlp.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

enum class Method { CPG, CF, VCF };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::CPG: return "cpg";
    case Method::CF: return "cf";
    case Method::VCF: return "vcf";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "cpg") return Method::CPG;
  if (s == "cf") return Method::CF;
  if (s == "vcf") return Method::VCF;
  throw std::invalid_argument("unknown method: " + s);
}

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LearnerConfig {
  Method method = Method::CF;
  double eta_b = 1e-3;       // babble-stage rate for <f> and <c'>
  double eta_f = 1e-4;       // focusing rate (CF/VCF)
  double eta_mu = 1e-3;      // policy rate: 1e-3 for CF/VCF, 3e-4 for CPG
  double eta_cprime = 3e-4;  // CPG's replay refinement of <c'>
  double tau = 0.1;          // shadow-policy nudge
  bool gate_enabled = true;
  int babble_minibatches = 15000;
  double mental_practice = 0.0;  // fraction of imaginary rollouts
  int n_m = 100;                 // movements per rollout minibatch
  bool refresh_model = false;    // CPG: babble-style <f> updates on real transitions
  int replay_capacity = 200000;
  int refine_batch = 100;
};

inline LearnerConfig default_config(Method m) {
  LearnerConfig c;
  c.method = m;
  if (m == Method::CPG) c.eta_mu = 3e-4;
  return c;
}

struct Agent {
  LearnerConfig cfg;
  int n_s = 0;
  int n_a = 0;
  MlpNet policy;        // mu, tanh output
  MlpNet shadow;        // mu^-, updated during rollouts without acting
  MlpNet f_model;       // <f>: (s,a) -> ds/dt estimate
  MlpNet cprime_model;  // <c'>: (s,a) -> scalar; empty for VCF
  AdamState opt_policy, opt_shadow, opt_f, opt_cprime;
};

inline Agent make_agent(const LearnerConfig& cfg, MlpNet policy, const MlpSpec& f_spec,
                        const MlpSpec& cprime_spec, std::uint64_t estimator_seed) {
  Agent a;
  a.cfg = cfg;
  a.n_s = policy.spec.input_size();
  a.n_a = policy.spec.output_size();
  if (policy.spec.output_activation != Activation::Tanh)
    throw std::invalid_argument("policy output must be tanh-bounded");
  if (f_spec.input_size() != a.n_s + a.n_a || f_spec.output_size() != a.n_s)
    throw std::invalid_argument("<f> must map (s,a) to state derivatives");
  a.policy = std::move(policy);
  a.shadow = a.policy;
  a.f_model = make_mlp(f_spec, substream(estimator_seed, "f"));
  if (cfg.method != Method::VCF) {
    if (cprime_spec.input_size() != a.n_s + a.n_a || cprime_spec.output_size() != 1)
      throw std::invalid_argument("<c'> must map (s,a) to a scalar");
    a.cprime_model = make_mlp(cprime_spec, substream(estimator_seed, "cprime"));
    a.opt_cprime = make_adam(a.cprime_model);
  }
  a.opt_policy = make_adam(a.policy);
  a.opt_shadow = make_adam(a.shadow);
  a.opt_f = make_adam(a.f_model);
  return a;
}

inline Eigen::MatrixXd vstack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

// Dynamics the backsweep differentiates through: either the learned <f> or
// the true environment (exact Jacobians, used by oracles and tests).
struct DynamicsSource {
  const MlpNet* model = nullptr;
  const Environment* exact = nullptr;

  static DynamicsSource learned(const MlpNet& net) { return {&net, nullptr}; }
  static DynamicsSource true_dynamics(const Environment& env) { return {nullptr, &env}; }

  Eigen::MatrixXd value(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) const {
    return model ? forward(*model, vstack(s, a)) : dynamics(*exact, s, a);
  }

  void vjp(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::MatrixXd& lam,
           Eigen::MatrixXd* ds, Eigen::MatrixXd* da) const {
    if (model) {
      ForwardCache cache;
      forward(*model, vstack(s, a), &cache);
      const Eigen::MatrixXd dx = backward_input(*model, cache, lam);
      *ds = dx.topRows(s.rows());
      *da = dx.bottomRows(a.rows());
    } else {
      dynamics_vjp(*exact, s, a, lam, ds, da);
    }
  }
};

// Source of c' values and raw c' gradients. CF/CPG estimate them through the
// <c'> network; VCF reads the exact quadratic form. The tanh chain
// c = phi(c') is applied by the caller, so both variants share one code path.
struct CostSource {
  const MlpNet* model = nullptr;
  const Environment* exact = nullptr;

  static CostSource learned(const MlpNet& net) { return {&net, nullptr}; }
  static CostSource exact_cost(const Environment& env) { return {nullptr, &env}; }

  void eval(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, Eigen::RowVectorXd* cp,
            Eigen::MatrixXd* dcp_ds, Eigen::MatrixXd* dcp_da) const {
    if (model) {
      ForwardCache cache;
      const Eigen::MatrixXd out = forward(*model, vstack(s, a), &cache);
      *cp = out.row(0);
      const Eigen::MatrixXd dx =
          backward_input(*model, cache, Eigen::MatrixXd::Ones(1, s.cols()));
      *dcp_ds = dx.topRows(s.rows());
      *dcp_da = dx.bottomRows(a.rows());
    } else {
      *cp = cprime(*exact, s);
      *dcp_ds = 2.0 * (s.array().colwise() * exact->b_diag.array()).matrix();
      dcp_da->setZero(a.rows(), a.cols());
    }
  }
};

struct Trajectory {
  std::vector<Eigen::MatrixXd> states;   // s_0 .. s_T (n_points entries)
  std::vector<Eigen::MatrixXd> actions;  // a_t = mu(s_t), one per state
  bool imaginary = false;
  bool diverged = false;

  int n_transitions() const { return static_cast<int>(states.size()) - 1; }
};

// Full motion from random initial states: actions from mu, transitions from
// the environment (real) or from <f> (imaginary; never touches the env).
inline Trajectory rollout_forward(const Agent& agent, const Environment& env, bool imaginary,
                                  Rng& rng, int n_m) {
  Trajectory traj;
  traj.imaginary = imaginary;
  Eigen::MatrixXd s(env.n_s(), n_m);
  rng.fill_uniform_pm1(s);
  const int n = env.n_steps();
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd a = forward(agent.policy, s);
    traj.states.push_back(s);
    traj.actions.push_back(a);
    Eigen::MatrixXd next = imaginary ? (s + env.dt * forward(agent.f_model, vstack(s, a))).eval()
                                     : step(env, s, a, &rng);
    if (!next.allFinite()) {
      traj.diverged = true;
      return traj;
    }
    s = std::move(next);
  }
  traj.states.push_back(s);
  traj.actions.push_back(forward(agent.policy, s));
  return traj;
}

// Gate for policy adjustment: open when the normalized squared model error,
// mean(e^2) over the minibatch divided by the variance of lambda . ds, is
// below 1. Variance is the population variance across the minibatch.
inline bool gate_open(const Eigen::RowVectorXd& e, const Eigen::RowVectorXd& lambda_dot_ds) {
  const double mean_e2 = e.array().square().mean();
  const double mean = lambda_dot_ds.mean();
  const double var = (lambda_dot_ds.array() - mean).square().mean();
  return mean_e2 < var;
}

// Terminal condition of the backsweep: g_T = dt * dc_T/da_T and
// lambda_T = dt * dc_T/ds_T + (dmu/ds_T)^T g_T.
inline void terminal_costate(const MlpNet& policy, const CostSource& cost,
                             const Eigen::MatrixXd& s_T, const Eigen::MatrixXd& a_T, double dt,
                             Eigen::MatrixXd* lambda_T, Eigen::MatrixXd* g_T) {
  Eigen::RowVectorXd cp;
  Eigen::MatrixXd dcp_ds, dcp_da;
  cost.eval(s_T, a_T, &cp, &dcp_ds, &dcp_da);
  const Eigen::RowVectorXd scale = 1.0 - cp.array().tanh().square();
  const Eigen::MatrixXd dc_ds = dcp_ds.array().rowwise() * scale.array();
  const Eigen::MatrixXd dc_da = dcp_da.array().rowwise() * scale.array();
  *g_T = dt * dc_da;
  ForwardCache cache;
  forward(policy, s_T, &cache);
  *lambda_T = dt * dc_ds + backward_input(policy, cache, *g_T);
}

struct CostateSweep {
  std::vector<Eigen::MatrixXd> costates;      // lambda_t, one per time point
  std::vector<Eigen::MatrixXd> action_grads;  // g_t = <dC/da_t>, one per time point
  std::vector<Eigen::RowVectorXd> focus_errors;  // e_t, one per transition
  std::vector<char> gates;                       // one per transition
  bool aborted = false;

  double gate_rate() const {
    if (gates.empty()) return 0.0;
    double open = 0;
    for (const char g : gates) open += g ? 1.0 : 0.0;
    return open / static_cast<double>(gates.size());
  }

  double mean_e2() const {
    if (focus_errors.empty()) return 0.0;
    double acc = 0;
    for (const auto& e : focus_errors) acc += e.array().square().mean();
    return acc / static_cast<double>(focus_errors.size());
  }
};

struct SweepOptions {
  bool focus_model = false;    // Eq-(10) updates on <f> during the sweep
  bool update_shadow = false;  // gated per-step mu^- adjustments
  bool gate_enabled = true;
  double eta_f = 1e-4;
  double eta_mu = 1e-3;
};

// Backward sweep over a finished trajectory. Computes the costates and the
// per-step action gradients; optionally focuses <f> and adjusts the shadow
// policy along the way. With the true dynamics and exact cost gradients it
// reproduces the derivatives of the episodic cost (see the oracle tests).
inline CostateSweep costate_backsweep(Agent& agent, const Trajectory& traj,
                                      const DynamicsSource& dyn, const CostSource& cost,
                                      double dt, const SweepOptions& opt) {
  const int n = traj.n_transitions();
  if (n < 1) throw std::invalid_argument("costate_backsweep: empty trajectory");
  CostateSweep sweep;
  sweep.costates.resize(n + 1);
  sweep.action_grads.resize(n + 1);
  sweep.focus_errors.resize(n);
  sweep.gates.assign(n, 0);

  terminal_costate(agent.policy, cost, traj.states[n], traj.actions[n], dt,
                   &sweep.costates[n], &sweep.action_grads[n]);

  Eigen::RowVectorXd cp;
  Eigen::MatrixXd dcp_ds, dcp_da, fjs, fja;
  for (int t = n - 1; t >= 0; --t) {
    const Eigen::MatrixXd& s = traj.states[t];
    const Eigen::MatrixXd& a = traj.actions[t];
    const Eigen::MatrixXd& lam_next = sweep.costates[t + 1];
    const Eigen::MatrixXd ds = traj.states[t + 1] - traj.states[t];

    // Focus error e = lambda_{t+dt} . (dt <f>(s,a) - ds), one scalar per sample.
    Eigen::MatrixXd fhat;
    ForwardCache fcache;
    if (dyn.model)
      fhat = forward(*dyn.model, vstack(s, a), &fcache);
    else
      fhat = dyn.value(s, a);
    const Eigen::RowVectorXd e =
        (lam_next.array() * (dt * fhat - ds).array()).colwise().sum();
    sweep.focus_errors[t] = e;

    // Imaginary transitions come from <f> itself, so e is identically zero
    // and carries no training signal; skip focusing and leave the gate open.
    if (opt.focus_model && !traj.imaginary && dyn.model == &agent.f_model) {
      const Eigen::MatrixXd seed = lam_next.array().rowwise() * (dt * e).array();
      adam_step(agent.f_model, backward_params(agent.f_model, fcache, seed), agent.opt_f,
                opt.eta_f);
    }

    cost.eval(s, a, &cp, &dcp_ds, &dcp_da);
    const Eigen::RowVectorXd scale = 1.0 - cp.array().tanh().square();
    const Eigen::MatrixXd dc_ds = dcp_ds.array().rowwise() * scale.array();
    const Eigen::MatrixXd dc_da = dcp_da.array().rowwise() * scale.array();

    dyn.vjp(s, a, lam_next, &fjs, &fja);
    const Eigen::MatrixXd g = dt * (dc_da + fja);
    sweep.action_grads[t] = g;

    bool open = true;
    if (!traj.imaginary && opt.gate_enabled) {
      const Eigen::RowVectorXd lam_ds =
          (lam_next.array() * ds.array()).colwise().sum();
      open = gate_open(e, lam_ds);
    }
    sweep.gates[t] = open ? 1 : 0;

    if (opt.update_shadow && open) {
      ForwardCache scache;
      forward(agent.shadow, s, &scache);
      adam_step(agent.shadow, backward_params(agent.shadow, scache, g), agent.opt_shadow,
                opt.eta_mu);
    }

    ForwardCache pcache;
    forward(agent.policy, s, &pcache);
    sweep.costates[t] = lam_next + dt * (dc_ds + fjs) + backward_input(agent.policy, pcache, g);
    if (!sweep.costates[t].allFinite()) {
      sweep.aborted = true;
      return sweep;
    }
  }
  return sweep;
}

// CPG: accumulate Eq-(8)'s summed parameter gradient and take one Adam step.
inline void update_policy_direct(Agent& agent, const CostateSweep& sweep,
                                 const Trajectory& traj) {
  MlpGradients total = zero_gradients(agent.policy);
  bool any = false;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    if (sweep.action_grads[t].size() == 0) continue;
    ForwardCache cache;
    forward(agent.policy, traj.states[t], &cache);
    accumulate(total, backward_params(agent.policy, cache, sweep.action_grads[t]));
    any = true;
  }
  if (any) adam_step(agent.policy, total, agent.opt_policy, agent.cfg.eta_mu);
}

// CF/VCF: after the rollout, move mu towards the shadow policy and re-clone.
inline void nudge_policy_toward_shadow(Agent& agent) {
  const double tau = agent.cfg.tau;
  for (std::size_t l = 0; l < agent.policy.n_weight_layers(); ++l) {
    agent.policy.weights[l] += tau * (agent.shadow.weights[l] - agent.policy.weights[l]);
    agent.policy.biases[l] += tau * (agent.shadow.biases[l] - agent.policy.biases[l]);
  }
  agent.shadow = agent.policy;
}

// Babble stage: random state/action probes fit <f> (and <c'>) by supervised
// learning before any rollouts happen.
inline void babble_stage(Agent& agent, const Environment& env, Rng& rng) {
  const int n_m = agent.cfg.n_m;
  Eigen::MatrixXd s(env.n_s(), n_m), a(env.n_a(), n_m);
  for (int mb = 0; mb < agent.cfg.babble_minibatches; ++mb) {
    rng.fill_uniform_pm1(s);
    rng.fill_uniform_pm1(a);
    const Eigen::MatrixXd x = vstack(s, a);

    ForwardCache fcache;
    const Eigen::MatrixXd fhat = forward(agent.f_model, x, &fcache);
    const Eigen::MatrixXd ef = env.dt * (fhat - dynamics(env, s, a));
    if (!ef.allFinite())
      throw DivergenceError("babble: non-finite <f> error at minibatch " + std::to_string(mb));
    adam_step(agent.f_model, backward_params(agent.f_model, fcache, env.dt * ef), agent.opt_f,
              agent.cfg.eta_b);

    if (!agent.cprime_model.empty()) {
      ForwardCache ccache;
      const Eigen::MatrixXd chat = forward(agent.cprime_model, x, &ccache);
      const Eigen::MatrixXd ec = chat - cprime(env, s).matrix();
      if (!ec.allFinite())
        throw DivergenceError("babble: non-finite <c'> error at minibatch " +
                              std::to_string(mb));
      adam_step(agent.cprime_model, backward_params(agent.cprime_model, ccache, ec),
                agent.opt_cprime, agent.cfg.eta_b);
    }
  }
}

// Replay store of (s, a, c') samples for CPG's rollout-stage refinement.
class CprimeReplay {
 public:
  CprimeReplay() = default;
  CprimeReplay(int n_s, int n_a, int capacity)
      : s_(Eigen::MatrixXd::Zero(n_s, capacity)),
        a_(Eigen::MatrixXd::Zero(n_a, capacity)),
        cp_(Eigen::RowVectorXd::Zero(capacity)),
        capacity_(capacity) {}

  void push(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::RowVectorXd& cp) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      s_.col(head_) = s.col(j);
      a_.col(head_) = a.col(j);
      cp_(head_) = cp(j);
      head_ = (head_ + 1) % capacity_;
      if (size_ < capacity_) ++size_;
    }
  }

  int size() const { return size_; }

  void sample(int batch, Rng& rng, Eigen::MatrixXd* s, Eigen::MatrixXd* a,
              Eigen::RowVectorXd* cp) const {
    s->resize(s_.rows(), batch);
    a->resize(a_.rows(), batch);
    cp->resize(batch);
    for (int j = 0; j < batch; ++j) {
      const int i = static_cast<int>(rng.uniform() * size_);
      s->col(j) = s_.col(i);
      a->col(j) = a_.col(i);
      (*cp)(j) = cp_(i);
    }
  }

 private:
  Eigen::MatrixXd s_, a_;
  Eigen::RowVectorXd cp_;
  int capacity_ = 0;
  int size_ = 0;
  int head_ = 0;
};

// One supervised minibatch step on <c'> from the replay store.
inline void refine_cprime(Agent& agent, const CprimeReplay& replay, Rng& rng) {
  if (replay.size() == 0 || agent.cprime_model.empty()) return;
  const int batch = std::min(agent.cfg.refine_batch, replay.size());
  Eigen::MatrixXd s, a;
  Eigen::RowVectorXd target;
  replay.sample(batch, rng, &s, &a, &target);
  ForwardCache cache;
  const Eigen::MatrixXd chat = forward(agent.cprime_model, vstack(s, a), &cache);
  const Eigen::MatrixXd ec = chat - target.matrix();
  adam_step(agent.cprime_model, backward_params(agent.cprime_model, cache, ec),
            agent.opt_cprime, agent.cfg.eta_cprime);
}

struct RolloutRecord {
  int rollout = 0;
  bool imaginary = false;
  bool diverged = false;
  double gate_rate = 0.0;
  double mean_e2 = 0.0;
  double mean_cost = 0.0;
};

// Rollout r (1-based) is imaginary when the running quota floor(p*r) ticks up.
inline bool imaginary_rollout(double practice_fraction, int rollout) {
  return std::floor(practice_fraction * rollout) >
         std::floor(practice_fraction * (rollout - 1));
}

using EvalHook = std::function<void(int rollout)>;

// The rollout stage: forward sweeps alternating with costate backsweeps,
// per-method policy updates, and periodic evaluation. The hook fires before
// any learning (rollout 0) and after every eval_period-th rollout.
inline void run_learning(Agent& agent, const Environment& env, Rng& rng, int n_rolls,
                         int eval_period, const EvalHook& hook = nullptr,
                         std::vector<RolloutRecord>* log = nullptr) {
  const LearnerConfig& cfg = agent.cfg;
  const bool indirect = cfg.method != Method::CPG;
  CprimeReplay replay;
  if (cfg.method == Method::CPG)
    replay = CprimeReplay(env.n_s(), env.n_a(), cfg.replay_capacity);

  DynamicsSource dyn = DynamicsSource::learned(agent.f_model);
  CostSource cost = cfg.method == Method::VCF ? CostSource::exact_cost(env)
                                              : CostSource::learned(agent.cprime_model);
  SweepOptions opt;
  opt.focus_model = cfg.method != Method::CPG;
  opt.update_shadow = indirect;
  opt.gate_enabled = cfg.gate_enabled;
  opt.eta_f = cfg.eta_f;
  opt.eta_mu = cfg.eta_mu;

  if (hook) hook(0);
  for (int r = 1; r <= n_rolls; ++r) {
    const bool imaginary = imaginary_rollout(cfg.mental_practice, r);
    const Trajectory traj = rollout_forward(agent, env, imaginary, rng, cfg.n_m);

    RolloutRecord rec;
    rec.rollout = r;
    rec.imaginary = imaginary;
    rec.diverged = traj.diverged;
    if (!traj.diverged) {
      CostateSweep sweep = costate_backsweep(agent, traj, dyn, cost, env.dt, opt);
      rec.diverged = sweep.aborted;
      rec.gate_rate = sweep.gate_rate();
      rec.mean_e2 = sweep.mean_e2();
      if (!sweep.aborted) {
        if (cfg.method == Method::CPG) {
          update_policy_direct(agent, sweep, traj);
          if (!imaginary) {
            if (cfg.refresh_model) {
              for (int t = 0; t < traj.n_transitions(); ++t) {
                ForwardCache fc;
                const Eigen::MatrixXd fhat =
                    forward(agent.f_model, vstack(traj.states[t], traj.actions[t]), &fc);
                const Eigen::MatrixXd ef =
                    env.dt * fhat - (traj.states[t + 1] - traj.states[t]);
                adam_step(agent.f_model, backward_params(agent.f_model, fc, env.dt * ef),
                          agent.opt_f, cfg.eta_b);
              }
            }
            for (std::size_t t = 0; t < traj.states.size(); ++t)
              replay.push(traj.states[t], traj.actions[t], cprime(env, traj.states[t]));
            for (int k = 0; k < traj.n_transitions(); ++k) refine_cprime(agent, replay, rng);
          }
        } else {
          nudge_policy_toward_shadow(agent);
        }
      }
      if (log) {
        double mean_cost = 0.0;
        for (std::size_t t = 0; t < traj.states.size(); ++t) {
          if (!traj.imaginary || cfg.method == Method::VCF)
            mean_cost += env.dt * cost_rate(env, traj.states[t]).mean();
          else
            mean_cost += env.dt * forward(agent.cprime_model,
                                          vstack(traj.states[t], traj.actions[t]))
                                      .array()
                                      .tanh()
                                      .mean();
        }
        rec.mean_cost = mean_cost;
      }
    }
    if (log) log->push_back(rec);
    if (hook && r % eval_period == 0) hook(r);
  }
}

}  // namespace cfrl

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrl/checkpoint.hpp"
#include "cfrl/ddpg.hpp"
#include "cfrl/env.hpp"
#include "cfrl/learner.hpp"
#include "cfrl/mlp.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

enum class Algo { CF, CPG, VCF, DDPG };

inline std::string to_string(Algo a) {
  switch (a) {
    case Algo::CF: return "cf";
    case Algo::CPG: return "cpg";
    case Algo::VCF: return "vcf";
    case Algo::DDPG: return "ddpg";
  }
  return "?";
}

inline Algo algo_from_string(const std::string& s) {
  if (s == "cf") return Algo::CF;
  if (s == "cpg") return Algo::CPG;
  if (s == "vcf") return Algo::VCF;
  if (s == "ddpg") return Algo::DDPG;
  throw std::invalid_argument("unknown method: " + s);
}

// ---------------------------------------------------------------------------
// Network sizing: reconstruct layer widths from published parameter counts.

inline long equal_width_params(int width, int in, int out, int layers) {
  if (layers == 3) return static_cast<long>(width) * (in + out + 1) + out;
  if (layers == 4)
    return static_cast<long>(width) * width + static_cast<long>(width) * (in + out + 2) + out;
  throw std::invalid_argument("equal_width_params: layers must be 3 or 4");
}

// Smallest-deviation equal width for a parameter target; exact when an
// integer solution exists. Rejects targets below the width-1 network.
inline int solve_equal_width(long target, int in, int out, int layers = 4) {
  const long minimum = equal_width_params(1, in, out, layers);
  if (target < minimum)
    throw std::invalid_argument("parameter target " + std::to_string(target) +
                                " is below the minimum " + std::to_string(minimum) +
                                " for input " + std::to_string(in) + ", output " +
                                std::to_string(out));
  int best = 1;
  long best_err = std::abs(equal_width_params(1, in, out, layers) - target);
  for (int h = 2; h < 4096; ++h) {
    const long err = std::abs(equal_width_params(h, in, out, layers) - target);
    if (err < best_err) {
      best = h;
      best_err = err;
    }
    if (equal_width_params(h, in, out, layers) > target && err > best_err) break;
  }
  return best;
}

inline MlpSpec policy_spec(int n_s, int n_a, int width) {
  return MlpSpec{{n_s, width, width, n_a}, Activation::Tanh};
}

inline MlpSpec estimator_spec(int in, int out, int width, int layers = 4) {
  if (layers == 3) return MlpSpec{{in, width, out}, Activation::Linear};
  return MlpSpec{{in, width, width, out}, Activation::Linear};
}

struct MethodSpecs {
  MlpSpec f_model, cprime, q;
  long n_est = 0;
};

// Distribute the estimator parameter budget: CF/CPG split it between <f> and
// <c'>, VCF owns only <f>, DDPG only <Q>.
inline MethodSpecs size_estimators(Algo algo, long n_est_target, int n_s, int n_a,
                                   int f_layers = 4) {
  const int in = n_s + n_a;
  MethodSpecs out;
  if (algo == Algo::DDPG) {
    const int h = solve_equal_width(n_est_target, in, 1, 4);
    out.q = estimator_spec(in, 1, h, 4);
    out.n_est = param_count(out.q);
    return out;
  }
  if (algo == Algo::VCF) {
    const int h = solve_equal_width(n_est_target, in, n_s, f_layers);
    out.f_model = estimator_spec(in, n_s, h, f_layers);
    out.n_est = param_count(out.f_model);
    return out;
  }
  const long minimum =
      equal_width_params(1, in, n_s, f_layers) + equal_width_params(1, in, 1, 4);
  if (n_est_target < minimum)
    throw std::invalid_argument("n_est target " + std::to_string(n_est_target) +
                                " is below the minimum " + std::to_string(minimum));
  long best_err = -1;
  for (int hf = 1; hf < 2048; ++hf) {
    const long nf = equal_width_params(hf, in, n_s, f_layers);
    if (nf >= n_est_target && best_err >= 0) break;
    const long remainder = n_est_target - nf;
    if (remainder < equal_width_params(1, in, 1, 4)) continue;
    const int hc = solve_equal_width(remainder, in, 1, 4);
    const long total = nf + equal_width_params(hc, in, 1, 4);
    const long err = std::abs(total - n_est_target);
    if (best_err < 0 || err < best_err) {
      best_err = err;
      out.f_model = estimator_spec(in, n_s, hf, f_layers);
      out.cprime = estimator_spec(in, 1, hc, 4);
      out.n_est = total;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration.

struct MethodConfig {
  std::string name;
  Algo algo = Algo::CF;
  LearnerConfig learner;
  DdpgConfig ddpg;
};

struct RunConfig {
  TaskSpec task;
  int trials = 10;
  int n_rolls = 2500;  // total rollout budget, babble equivalent included
  int eval_period = 10;
  int test_movements = 100;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  long n_mu_target = 314;
  long n_est_target = 4483;
  int f_layers = 4;
  bool save_checkpoints = true;
  bool write_diagnostics = true;
  std::vector<MethodConfig> methods;
  std::string raw_text;  // original config file, echoed verbatim into exports
};

inline MethodConfig default_method_config(Algo algo) {
  MethodConfig m;
  m.algo = algo;
  m.name = to_string(algo);
  if (algo != Algo::DDPG) {
    Method method = algo == Algo::CF    ? Method::CF
                    : algo == Algo::CPG ? Method::CPG
                                        : Method::VCF;
    m.learner = default_config(method);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Curves and summaries.

// Running mean of each point with the 4 preceding ones (fewer at the start).
inline std::vector<double> smooth5(const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::size_t lo = i >= 4 ? i - 4 : 0;
    double acc = 0;
    for (std::size_t k = lo; k <= i; ++k) acc += raw[k];
    out[i] = acc / static_cast<double>(i - lo + 1);
  }
  return out;
}

struct TrialSummary {
  double c_min = 0.0;
  double c_final = 0.0;
};

inline TrialSummary summarize(const std::vector<double>& raw) {
  if (raw.empty()) throw std::invalid_argument("summarize: empty curve");
  const std::vector<double> sm = smooth5(raw);
  TrialSummary s;
  s.c_min = *std::min_element(sm.begin(), sm.end());
  s.c_final = sm.back();
  return s;
}

// Babble minibatches expressed in rollouts: thirty 100-sample minibatches
// hold as many examples as one 30-step rollout.
inline int babble_equivalent_shift(int n_babble_minibatches) {
  return static_cast<int>(std::lround(n_babble_minibatches / 30.0));
}

struct LearningCurve {
  std::string method;
  int trial = 0;
  int babble_shift = 0;
  int total_budget = 0;
  std::vector<int> rollout;  // budget-aligned x: babble_shift + learning rollout
  std::vector<double> raw;

  TrialSummary summary() const { return summarize(raw); }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_curve_csv(const std::string& path, const LearningCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# cfrl learning curve\n";
  out << "# method = " << curve.method << "\n";
  out << "# trial = " << curve.trial << "\n";
  out << "# babble_equivalent_rollouts = " << curve.babble_shift << "\n";
  out << "# total_budget = " << curve.total_budget << "\n";
  out << "rollout,raw_cost,smoothed_cost\n";
  const std::vector<double> sm = smooth5(curve.raw);
  for (std::size_t i = 0; i < curve.raw.size(); ++i)
    out << curve.rollout[i] << "," << detail::fmt_double(curve.raw[i]) << ","
        << detail::fmt_double(sm[i]) << "\n";
}

inline LearningCurve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  LearningCurve curve;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      std::string value = line.substr(eq + 1);
      const auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
      };
      trim(key);
      trim(value);
      if (key == "method") curve.method = value;
      if (key == "trial") curve.trial = std::stoi(value);
      if (key == "babble_equivalent_rollouts") curve.babble_shift = std::stoi(value);
      if (key == "total_budget") curve.total_budget = std::stoi(value);
      continue;
    }
    if (line.rfind("rollout", 0) == 0) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    curve.rollout.push_back(std::stoi(cell));
    std::getline(row, cell, ',');
    curve.raw.push_back(std::stod(cell));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Policy evaluation on the fixed test movements.

inline constexpr double kMaxEpisodeCost = 3.1;  // 31 points * dt * sup c

// Mean episodic cost of the policy over the test movements, without any
// learning. Stochastic tasks are evaluated under their own noise. Divergent
// movements are recorded at the saturated maximum.
inline double evaluate_policy(const MlpNet& policy, const Environment& env,
                              const Eigen::MatrixXd& test_states, Rng* rng = nullptr) {
  Eigen::MatrixXd s = test_states;
  Eigen::RowVectorXd cost = env.dt * cost_rate(env, s);
  const int n = env.n_steps();
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd a = forward(policy, s);
    s = step(env, s, a, rng);
    cost += env.dt * cost_rate(env, s);
  }
  double acc = 0;
  for (Eigen::Index j = 0; j < cost.size(); ++j)
    acc += std::isfinite(cost(j)) ? std::min(cost(j), kMaxEpisodeCost) : kMaxEpisodeCost;
  return acc / static_cast<double>(cost.size());
}

// ---------------------------------------------------------------------------
// Trials and blocks.

struct MethodTrialResult {
  std::string method;
  LearningCurve curve;
  TrialSummary summary;
  long n_mu = 0;
  long n_est = 0;
  double initial_cost = 0.0;
  bool failed = false;
  std::string error;
  long diverged_rollouts = 0;
  std::vector<RolloutRecord> diag;
  MlpNet final_policy;
};

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<MethodTrialResult> methods;
};

inline std::uint64_t trial_seed(const RunConfig& cfg, int trial) {
  return substream(cfg.master_seed, "trial", static_cast<std::uint64_t>(trial));
}

inline Environment make_trial_env(const RunConfig& cfg, int trial) {
  TaskSpec spec = cfg.task;
  spec.seed = substream(trial_seed(cfg, trial), "env");
  return make_task(spec);
}

inline MlpNet make_trial_policy(const RunConfig& cfg, int trial) {
  const int width = solve_equal_width(cfg.n_mu_target, cfg.task.n_s, cfg.task.n_a(), 4);
  return make_mlp(policy_spec(cfg.task.n_s, cfg.task.n_a(), width),
                  substream(trial_seed(cfg, trial), "policy"));
}

inline Eigen::MatrixXd make_trial_test_states(const RunConfig& cfg, int trial) {
  Rng rng(substream(trial_seed(cfg, trial), "test"));
  Eigen::MatrixXd s(cfg.task.n_s, cfg.test_movements);
  rng.fill_uniform_pm1(s);
  return s;
}

// Runs one method on one trial's shared environment/policy/test set.
inline MethodTrialResult run_method_trial(const RunConfig& cfg, const MethodConfig& method,
                                          const Environment& env, const MlpNet& initial_policy,
                                          const Eigen::MatrixXd& test_states, int trial) {
  const std::uint64_t tseed = trial_seed(cfg, trial);
  MethodTrialResult out;
  out.method = method.name;
  out.n_mu = param_count(initial_policy.spec);

  const MethodSpecs specs =
      size_estimators(method.algo, cfg.n_est_target, cfg.task.n_s, cfg.task.n_a(), cfg.f_layers);
  out.n_est = specs.n_est;

  const int shift = method.algo == Algo::DDPG
                        ? 0
                        : babble_equivalent_shift(method.learner.babble_minibatches);
  const int n_learn = std::max(0, cfg.n_rolls - shift);

  out.curve.method = method.name;
  out.curve.trial = trial;
  out.curve.babble_shift = shift;
  out.curve.total_budget = cfg.n_rolls;

  Rng eval_rng(substream(tseed, method.name + "/eval"));
  const bool noisy = cfg.task.noise_sigma > 0.0;
  const MlpNet* policy_ptr = nullptr;
  const auto hook = [&](int rollout) {
    out.curve.rollout.push_back(shift + rollout);
    out.curve.raw.push_back(
        evaluate_policy(*policy_ptr, env, test_states, noisy ? &eval_rng : nullptr));
  };

  try {
    if (method.algo == Algo::DDPG) {
      DdpgAgent agent =
          make_ddpg_agent(method.ddpg, initial_policy, specs.q, substream(tseed, "ddpg/nets"));
      policy_ptr = &agent.policy;
      Rng rng(substream(tseed, "ddpg/run"));
      run_ddpg(agent, env, rng, n_learn, cfg.eval_period, hook, &out.diag);
      out.final_policy = agent.policy;
    } else {
      LearnerConfig lc = method.learner;
      Agent agent = make_agent(lc, initial_policy, specs.f_model, specs.cprime,
                               substream(tseed, method.name + "/nets"));
      policy_ptr = &agent.policy;
      Rng babble_rng(substream(tseed, method.name + "/babble"));
      babble_stage(agent, env, babble_rng);
      Rng rng(substream(tseed, method.name + "/run"));
      run_learning(agent, env, rng, n_learn, cfg.eval_period, hook, &out.diag);
      out.final_policy = agent.policy;
    }
    out.summary = out.curve.summary();
    out.initial_cost = out.curve.raw.front();
    for (const auto& rec : out.diag)
      if (rec.diverged) ++out.diverged_rollouts;
  } catch (const std::exception& ex) {
    out.failed = true;
    out.error = ex.what();
  }
  return out;
}

inline TrialResult run_trial(const RunConfig& cfg, int trial) {
  TrialResult result;
  result.trial = trial;
  result.seed = trial_seed(cfg, trial);
  const Environment env = make_trial_env(cfg, trial);
  const MlpNet initial_policy = make_trial_policy(cfg, trial);
  const Eigen::MatrixXd test_states = make_trial_test_states(cfg, trial);
  for (const auto& method : cfg.methods)
    result.methods.push_back(
        run_method_trial(cfg, method, env, initial_policy, test_states, trial));
  return result;
}

struct BlockMethodStats {
  std::string method;
  long n_mu = 0;
  long n_est = 0;
  double c_min = 0.0;        // block mean of per-trial C_min
  double c_final = 0.0;      // block mean of per-trial C_final
  double initial_cost = 0.0; // block mean of the first curve point
  int completed_trials = 0;
  int failed_trials = 0;
  long diverged_rollouts = 0;
};

struct BlockReport {
  RunConfig config;
  std::vector<TrialResult> trials;
  std::vector<BlockMethodStats> methods;
};

inline void compute_block_stats(BlockReport& report) {
  report.methods.clear();
  for (const auto& method : report.config.methods) {
    BlockMethodStats stats;
    stats.method = method.name;
    for (const auto& trial : report.trials)
      for (const auto& mt : trial.methods) {
        if (mt.method != method.name) continue;
        if (mt.failed) {
          ++stats.failed_trials;
          continue;
        }
        stats.n_mu = mt.n_mu;
        stats.n_est = mt.n_est;
        stats.c_min += mt.summary.c_min;
        stats.c_final += mt.summary.c_final;
        stats.initial_cost += mt.initial_cost;
        stats.diverged_rollouts += mt.diverged_rollouts;
        ++stats.completed_trials;
      }
    if (stats.completed_trials > 0) {
      stats.c_min /= stats.completed_trials;
      stats.c_final /= stats.completed_trials;
      stats.initial_cost /= stats.completed_trials;
    }
    report.methods.push_back(stats);
  }
}

inline std::string curve_filename(int trial, const std::string& method) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "trial%02d_%s.csv", trial, method.c_str());
  return buf;
}

// Table-1-shaped block summary: one method per row.
inline void write_summary_csv(const std::string& path, const BlockReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "method,n_s,n_c,n_C,n_mu,n_est,C_min,C_final\n";
  for (const auto& m : report.methods)
    out << m.method << "," << report.config.task.n_s << "," << report.config.task.n_c << ","
        << report.config.task.n_cc << "," << m.n_mu << "," << m.n_est << ","
        << detail::fmt_double(m.c_min) << "," << detail::fmt_double(m.c_final) << "\n";
}

inline void write_diagnostics_csv(const std::string& path,
                                  const std::vector<RolloutRecord>& diag) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "rollout,imaginary,diverged,gate_rate,mean_e2,mean_cost\n";
  for (const auto& r : diag)
    out << r.rollout << "," << (r.imaginary ? 1 : 0) << "," << (r.diverged ? 1 : 0) << ","
        << detail::fmt_double(r.gate_rate) << "," << detail::fmt_double(r.mean_e2) << ","
        << detail::fmt_double(r.mean_cost) << "\n";
}

// Runs the whole block and writes curves, diagnostics, checkpoints, the
// config echo, and the Table-1-shaped summary into the output directory.
inline BlockReport run_block(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  BlockReport report;
  report.config = cfg;
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);

  for (int trial = 0; trial < cfg.trials; ++trial) {
    TrialResult result = run_trial(cfg, trial);
    const Environment env = make_trial_env(cfg, trial);
    if (cfg.save_checkpoints) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "trial%02d_env.json", trial);
      save_json((out_dir / buf).string(), to_json(env));
    }
    for (const auto& mt : result.methods) {
      if (!mt.failed) {
        write_curve_csv((out_dir / curve_filename(trial, mt.method)).string(), mt.curve);
        if (cfg.write_diagnostics && !mt.diag.empty()) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "trial%02d_%s_diag.csv", trial, mt.method.c_str());
          write_diagnostics_csv((out_dir / buf).string(), mt.diag);
        }
        if (cfg.save_checkpoints && !mt.final_policy.empty()) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "trial%02d_%s_policy.json", trial, mt.method.c_str());
          save_json((out_dir / buf).string(), policy_checkpoint(mt.final_policy));
        }
      }
      if (mt.failed) {
        std::ofstream fail(out_dir / "failures.log", std::ios::app);
        fail << "trial " << trial << " method " << mt.method << ": " << mt.error << "\n";
      }
    }
    report.trials.push_back(std::move(result));
  }

  compute_block_stats(report);
  write_summary_csv((out_dir / "summary.csv").string(), report);
  if (!cfg.raw_text.empty()) {
    std::ofstream echo(out_dir / "config.echo");
    echo << cfg.raw_text;
  }
  return report;
}

// Rebuilds the block summary from exported curve files alone; reproduces the
// original C_min/C_final exactly.
inline std::vector<BlockMethodStats> rebuild_from_curves(const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, std::vector<TrialSummary>> per_method;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("trial", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv" && name.find("_diag") == std::string::npos)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const LearningCurve curve = read_curve_csv(path.string());
    per_method[curve.method].push_back(curve.summary());
  }
  std::vector<BlockMethodStats> stats;
  for (const auto& [method, summaries] : per_method) {
    BlockMethodStats s;
    s.method = method;
    s.completed_trials = static_cast<int>(summaries.size());
    for (const auto& t : summaries) {
      s.c_min += t.c_min;
      s.c_final += t.c_final;
    }
    s.c_min /= summaries.size();
    s.c_final /= summaries.size();
    stats.push_back(s);
  }
  return stats;
}

}  // namespace cfrl

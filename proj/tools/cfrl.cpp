// Command-line front end: run benchmark blocks, evaluate checkpointed
// policies, solve network widths for parameter targets, and rebuild block
// summaries from exported curves.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cfrl/checkpoint.hpp"
#include "cfrl/config.hpp"
#include "cfrl/harness.hpp"

namespace {

void print_block_table(const std::vector<cfrl::BlockMethodStats>& methods,
                       const cfrl::RunConfig* cfg) {
  std::printf("%-6s %5s %5s %5s %7s %7s %9s %9s\n", "method", "n_s", "n_c", "n_C", "n_mu",
              "n_est", "C_min", "C_final");
  for (const auto& m : methods) {
    if (cfg)
      std::printf("%-6s %5d %5d %5d %7ld %7ld %9.3f %9.3f\n", m.method.c_str(), cfg->task.n_s,
                  cfg->task.n_c, cfg->task.n_cc, m.n_mu, m.n_est, m.c_min, m.c_final);
    else
      std::printf("%-6s %5s %5s %5s %7s %7s %9.3f %9.3f\n", m.method.c_str(), "-", "-", "-",
                  "-", "-", m.c_min, m.c_final);
  }
}

int cmd_run(const std::string& config_path, const std::string& out_override,
            long seed_override, int trials_override) {
  cfrl::RunConfig cfg = cfrl::parse_run_config_file(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed_override);
  if (trials_override > 0) cfg.trials = trials_override;
  std::printf("running %d trial(s), %d-rollout budget, task n_s=%d n_c=%d n_C=%d (%s)\n",
              cfg.trials, cfg.n_rolls, cfg.task.n_s, cfg.task.n_c, cfg.task.n_cc,
              cfrl::to_string(cfg.task.dynamics).c_str());
  const cfrl::BlockReport report = cfrl::run_block(cfg);
  print_block_table(report.methods, &report.config);
  for (const auto& m : report.methods)
    if (m.failed_trials > 0)
      std::printf("warning: %s failed in %d trial(s); see failures.log\n", m.method.c_str(),
                  m.failed_trials);
  std::printf("exports written to %s\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& policy_path, const std::string& env_path, int movements,
             long seed) {
  const cfrl::MlpNet policy = cfrl::policy_from_checkpoint(cfrl::load_json(policy_path));
  const cfrl::Json env_json = cfrl::load_json(env_path);
  cfrl::expect_kind(env_json, "environment");
  const cfrl::Environment env = cfrl::environment_from_json(env_json);
  cfrl::Rng rng(cfrl::substream(static_cast<std::uint64_t>(seed), "eval"));
  Eigen::MatrixXd test(env.n_s(), movements);
  rng.fill_uniform_pm1(test);
  const bool noisy = env.spec.noise_sigma > 0.0;
  const double cost = cfrl::evaluate_policy(policy, env, test, noisy ? &rng : nullptr);
  std::printf("mean episodic cost over %d movements: %.6f\n", movements, cost);
  return 0;
}

int cmd_sizes(long n_mu, long n_est, int n_s, int n_c, int n_cc, const std::string& method,
              int f_layers) {
  cfrl::TaskSpec task;
  task.n_s = n_s;
  task.n_c = n_c;
  task.n_cc = n_cc;
  task.validate();
  const int n_a = task.n_a();
  const int h_mu = cfrl::solve_equal_width(n_mu, n_s, n_a, 4);
  const cfrl::MlpSpec mu = cfrl::policy_spec(n_s, n_a, h_mu);
  std::printf("policy: %d -> %d -> %d -> %d, %ld parameters (target %ld)\n", n_s, h_mu, h_mu,
              n_a, cfrl::param_count(mu), n_mu);
  const cfrl::Algo algo = cfrl::algo_from_string(method);
  const cfrl::MethodSpecs specs = cfrl::size_estimators(algo, n_est, n_s, n_a, f_layers);
  if (algo == cfrl::Algo::DDPG) {
    std::printf("<Q>: %d -> %d -> %d -> 1, %ld parameters\n", n_s + n_a,
                specs.q.layer_sizes[1], specs.q.layer_sizes[2], cfrl::param_count(specs.q));
  } else {
    std::printf("<f>: %d ->", n_s + n_a);
    for (std::size_t l = 1; l < specs.f_model.layer_sizes.size(); ++l)
      std::printf(" %d%s", specs.f_model.layer_sizes[l],
                  l + 1 < specs.f_model.layer_sizes.size() ? " ->" : "");
    std::printf(", %ld parameters\n", cfrl::param_count(specs.f_model));
    if (algo != cfrl::Algo::VCF)
      std::printf("<c'>: %d -> %d -> %d -> 1, %ld parameters\n", n_s + n_a,
                  specs.cprime.layer_sizes[1], specs.cprime.layer_sizes[2],
                  cfrl::param_count(specs.cprime));
  }
  std::printf("n_est achieved: %ld (target %ld)\n", specs.n_est, n_est);
  return 0;
}

int cmd_report(const std::string& dir) {
  const auto stats = cfrl::rebuild_from_curves(dir);
  if (stats.empty()) {
    std::fprintf(stderr, "no curve files found in %s\n", dir.c_str());
    return 1;
  }
  const std::filesystem::path echo = std::filesystem::path(dir) / "config.echo";
  if (std::filesystem::exists(echo)) {
    cfrl::RunConfig cfg = cfrl::parse_run_config_file(echo.string());
    cfrl::BlockReport report;
    report.config = cfg;
    report.methods = stats;
    for (auto& m : report.methods) {
      m.n_mu = cfrl::param_count(cfrl::policy_spec(
          cfg.task.n_s, cfg.task.n_a(),
          cfrl::solve_equal_width(cfg.n_mu_target, cfg.task.n_s, cfg.task.n_a(), 4)));
      m.n_est = cfrl::size_estimators(cfrl::algo_from_string(m.method), cfg.n_est_target,
                                      cfg.task.n_s, cfg.task.n_a(), cfg.f_layers)
                    .n_est;
    }
    cfrl::write_summary_csv((std::filesystem::path(dir) / "summary.csv").string(), report);
    print_block_table(report.methods, &cfg);
    std::printf("summary.csv rebuilt in %s\n", dir.c_str());
  } else {
    print_block_table(stats, nullptr);
    std::printf("no config.echo found; summary.csv left untouched\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"costate-focused reinforcement learning benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_override, policy_path, env_path, report_dir;
  long seed_override = -1, eval_seed = 1, n_mu = 314, n_est = 4483;
  int trials_override = 0, movements = 100, n_s = 10, n_c = 1, n_cc = 4, f_layers = 4;
  std::string method = "cf";

  auto* run = app.add_subcommand("run", "execute a block of trials from a config file");
  run->add_option("--config", config_path, "run configuration file")->required();
  run->add_option("--output-dir", out_override, "override block.output_dir");
  run->add_option("--seed", seed_override, "override block.master_seed");
  run->add_option("--trials", trials_override, "override block.trials");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpointed policy on a task");
  eval->add_option("--policy", policy_path, "policy checkpoint (json)")->required();
  eval->add_option("--env", env_path, "environment checkpoint (json)")->required();
  eval->add_option("--movements", movements, "number of test movements");
  eval->add_option("--seed", eval_seed, "seed for test movements and noise");

  auto* sizes = app.add_subcommand("sizes", "solve network widths for parameter targets");
  sizes->add_option("--n-mu", n_mu, "policy parameter target");
  sizes->add_option("--n-est", n_est, "estimator parameter target");
  sizes->add_option("--n-s", n_s, "state dimension");
  sizes->add_option("--n-c", n_c, "cost-rate-relevant state elements");
  sizes->add_option("--n-C", n_cc, "cost-relevant state elements");
  sizes->add_option("--method", method, "cf, cpg, vcf, or ddpg");
  sizes->add_option("--f-layers", f_layers, "<f> depth: 3 or 4");

  auto* report = app.add_subcommand("report", "rebuild block summaries from exported curves");
  report->add_option("--dir", report_dir, "block output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_override, seed_override, trials_override);
    if (eval->parsed()) return cmd_eval(policy_path, env_path, movements, eval_seed);
    if (sizes->parsed()) return cmd_sizes(n_mu, n_est, n_s, n_c, n_cc, method, f_layers);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrl/harness.hpp"

// Human-readable run configuration: `key = value` lines, `#` comments.
// Every hyperparameter defaults to the published values, so a minimal file
// only names the task and the methods to compare.

namespace cfrl {

class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    kv.raw_ = text;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": expected key = value");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      trim(key);
      trim(value);
      if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) +
                                                   ": empty key");
      kv.values_[key] = value;
    }
    return kv;
  }

  static KeyValues parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw std::invalid_argument("config key " + key + ": not a number: " + it->second);
    }
  }

  long get_long(const std::string& key, long fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (...) {
      throw std::invalid_argument("config key " + key + ": not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw std::invalid_argument("config key " + key + ": not a boolean: " + v);
  }

  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::string> out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
      trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  // Keys present in the file but never consulted; typo guard.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [key, value] : values_)
      if (!used_.count(key)) out.push_back(key);
    return out;
  }

  const std::string& raw() const { return raw_; }

 private:
  static void trim(std::string& s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  std::string raw_;
};

inline MethodConfig parse_method_config(const KeyValues& kv, const std::string& name) {
  MethodConfig m = default_method_config(algo_from_string(name));
  const auto key = [&](const char* suffix) { return name + "." + suffix; };
  if (m.algo == Algo::DDPG) {
    m.ddpg.eta_q = kv.get_double(key("eta_q"), m.ddpg.eta_q);
    m.ddpg.eta_mu = kv.get_double(key("eta_mu"), m.ddpg.eta_mu);
    m.ddpg.tau = kv.get_double(key("tau"), m.ddpg.tau);
    m.ddpg.batch = static_cast<int>(kv.get_long(key("batch"), m.ddpg.batch));
    m.ddpg.buffer_capacity =
        static_cast<int>(kv.get_long(key("buffer"), m.ddpg.buffer_capacity));
    m.ddpg.sigma_start = kv.get_double(key("sigma_start"), m.ddpg.sigma_start);
    m.ddpg.sigma_end = kv.get_double(key("sigma_end"), m.ddpg.sigma_end);
    const std::string noise = kv.get_string(key("noise"), "gaussian");
    if (noise == "ou")
      m.ddpg.ou_noise = true;
    else if (noise != "gaussian")
      throw std::invalid_argument("ddpg.noise must be gaussian or ou");
  } else {
    m.learner.eta_b = kv.get_double(key("eta_b"), m.learner.eta_b);
    m.learner.eta_f = kv.get_double(key("eta_f"), m.learner.eta_f);
    m.learner.eta_mu = kv.get_double(key("eta_mu"), m.learner.eta_mu);
    m.learner.eta_cprime = kv.get_double(key("eta_cprime"), m.learner.eta_cprime);
    m.learner.tau = kv.get_double(key("tau"), m.learner.tau);
    m.learner.gate_enabled = kv.get_bool(key("gate"), m.learner.gate_enabled);
    m.learner.babble_minibatches =
        static_cast<int>(kv.get_long(key("babble"), m.learner.babble_minibatches));
    m.learner.mental_practice =
        kv.get_double(key("mental_practice"), m.learner.mental_practice);
    m.learner.refresh_model = kv.get_bool(key("refresh_model"), m.learner.refresh_model);
  }
  return m;
}

inline RunConfig parse_run_config(const KeyValues& kv) {
  RunConfig cfg;
  cfg.task.n_s = static_cast<int>(kv.get_long("task.n_s", cfg.task.n_s));
  cfg.task.n_c = static_cast<int>(kv.get_long("task.n_c", cfg.task.n_c));
  cfg.task.n_cc = static_cast<int>(kv.get_long("task.n_C", cfg.task.n_cc));
  cfg.task.dynamics = dynamics_kind_from_string(
      kv.get_string("task.dynamics", to_string(cfg.task.dynamics)));
  cfg.task.noise_sigma = kv.get_double("task.noise_sigma", cfg.task.noise_sigma);
  cfg.task.validate();

  cfg.trials = static_cast<int>(kv.get_long("block.trials", cfg.trials));
  cfg.n_rolls = static_cast<int>(kv.get_long("block.n_rolls", cfg.n_rolls));
  cfg.eval_period = static_cast<int>(kv.get_long("block.eval_period", cfg.eval_period));
  cfg.test_movements =
      static_cast<int>(kv.get_long("block.test_movements", cfg.test_movements));
  cfg.master_seed =
      static_cast<std::uint64_t>(kv.get_long("block.master_seed", 1));
  cfg.output_dir = kv.get_string("block.output_dir", cfg.output_dir);
  cfg.save_checkpoints = kv.get_bool("block.save_checkpoints", cfg.save_checkpoints);
  cfg.write_diagnostics = kv.get_bool("block.diagnostics", cfg.write_diagnostics);

  cfg.n_mu_target = kv.get_long("nets.n_mu", cfg.n_mu_target);
  cfg.n_est_target = kv.get_long("nets.n_est", cfg.n_est_target);
  cfg.f_layers = static_cast<int>(kv.get_long("nets.f_layers", cfg.f_layers));
  if (cfg.f_layers != 3 && cfg.f_layers != 4)
    throw std::invalid_argument("nets.f_layers must be 3 or 4");

  for (const std::string& name : kv.get_list("methods", {"cf", "cpg", "ddpg"}))
    cfg.methods.push_back(parse_method_config(kv, name));
  if (cfg.methods.empty()) throw std::invalid_argument("config names no methods");

  const auto unused = kv.unused();
  if (!unused.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unused) msg += " " + k;
    throw std::invalid_argument(msg);
  }

  cfg.trials = std::max(1, cfg.trials);
  cfg.raw_text = kv.raw();
  return cfg;
}

inline RunConfig parse_run_config_file(const std::string& path) {
  return parse_run_config(KeyValues::parse_file(path));
}

// Canonical text form of a configuration; parses back to an equivalent
// RunConfig. Used as the echo for programmatically built runs.
inline std::string render_config(const RunConfig& cfg) {
  std::ostringstream out;
  const auto d = [](double v) { return detail::fmt_double(v); };
  out << "task.n_s = " << cfg.task.n_s << "\n";
  out << "task.n_c = " << cfg.task.n_c << "\n";
  out << "task.n_C = " << cfg.task.n_cc << "\n";
  out << "task.dynamics = " << to_string(cfg.task.dynamics) << "\n";
  out << "task.noise_sigma = " << d(cfg.task.noise_sigma) << "\n";
  out << "block.trials = " << cfg.trials << "\n";
  out << "block.n_rolls = " << cfg.n_rolls << "\n";
  out << "block.eval_period = " << cfg.eval_period << "\n";
  out << "block.test_movements = " << cfg.test_movements << "\n";
  out << "block.master_seed = " << cfg.master_seed << "\n";
  out << "block.output_dir = " << cfg.output_dir << "\n";
  out << "block.save_checkpoints = " << (cfg.save_checkpoints ? "true" : "false") << "\n";
  out << "block.diagnostics = " << (cfg.write_diagnostics ? "true" : "false") << "\n";
  out << "nets.n_mu = " << cfg.n_mu_target << "\n";
  out << "nets.n_est = " << cfg.n_est_target << "\n";
  out << "nets.f_layers = " << cfg.f_layers << "\n";
  out << "methods = ";
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    out << (i ? ", " : "") << cfg.methods[i].name;
  out << "\n";
  for (const auto& m : cfg.methods) {
    if (m.algo == Algo::DDPG) {
      out << m.name << ".eta_q = " << d(m.ddpg.eta_q) << "\n";
      out << m.name << ".eta_mu = " << d(m.ddpg.eta_mu) << "\n";
      out << m.name << ".tau = " << d(m.ddpg.tau) << "\n";
      out << m.name << ".batch = " << m.ddpg.batch << "\n";
      out << m.name << ".buffer = " << m.ddpg.buffer_capacity << "\n";
      out << m.name << ".sigma_start = " << d(m.ddpg.sigma_start) << "\n";
      out << m.name << ".sigma_end = " << d(m.ddpg.sigma_end) << "\n";
      out << m.name << ".noise = " << (m.ddpg.ou_noise ? "ou" : "gaussian") << "\n";
    } else {
      out << m.name << ".eta_b = " << d(m.learner.eta_b) << "\n";
      out << m.name << ".eta_f = " << d(m.learner.eta_f) << "\n";
      out << m.name << ".eta_mu = " << d(m.learner.eta_mu) << "\n";
      out << m.name << ".eta_cprime = " << d(m.learner.eta_cprime) << "\n";
      out << m.name << ".tau = " << d(m.learner.tau) << "\n";
      out << m.name << ".gate = " << (m.learner.gate_enabled ? "true" : "false") << "\n";
      out << m.name << ".babble = " << m.learner.babble_minibatches << "\n";
      out << m.name << ".mental_practice = " << d(m.learner.mental_practice) << "\n";
      out << m.name << ".refresh_model = " << (m.learner.refresh_model ? "true" : "false")
          << "\n";
    }
  }
  return out.str();
}

}  // namespace cfrl

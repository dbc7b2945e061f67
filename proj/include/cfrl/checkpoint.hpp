#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cfrl/adam.hpp"
#include "cfrl/ddpg.hpp"
#include "cfrl/env.hpp"
#include "cfrl/learner.hpp"
#include "cfrl/mlp.hpp"

// Versioned JSON checkpoints for networks, optimizer states, environments,
// and whole agents. Doubles round-trip exactly through the serializer.

namespace cfrl {

using Json = nlohmann::json;

namespace detail {

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());
  j["data"] = std::move(data);
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw std::invalid_argument("checkpoint: matrix payload size mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const Json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace detail

inline Json to_json(const MlpSpec& spec) {
  Json j;
  j["layer_sizes"] = spec.layer_sizes;
  j["output_activation"] = to_string(spec.output_activation);
  return j;
}

inline MlpSpec mlp_spec_from_json(const Json& j) {
  MlpSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  spec.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  spec.validate();
  return spec;
}

inline Json to_json(const MlpNet& net) {
  Json j;
  j["spec"] = to_json(net.spec);
  Json w = Json::array(), b = Json::array();
  for (const auto& m : net.weights) w.push_back(detail::matrix_to_json(m));
  for (const auto& v : net.biases) b.push_back(detail::vector_to_json(v));
  j["weights"] = std::move(w);
  j["biases"] = std::move(b);
  return j;
}

inline MlpNet mlp_from_json(const Json& j) {
  MlpNet net;
  net.spec = mlp_spec_from_json(j.at("spec"));
  for (const auto& m : j.at("weights")) net.weights.push_back(detail::matrix_from_json(m));
  for (const auto& v : j.at("biases")) net.biases.push_back(detail::vector_from_json(v));
  if (net.weights.size() + 1 != net.spec.layer_sizes.size())
    throw std::invalid_argument("checkpoint: layer count mismatch");
  return net;
}

inline Json to_json(const AdamState& s) {
  Json j;
  j["step"] = s.step;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["eps"] = s.eps;
  j["skipped"] = s.skipped;
  Json mw = Json::array(), vw = Json::array(), mb = Json::array(), vb = Json::array();
  for (const auto& m : s.mw) mw.push_back(detail::matrix_to_json(m));
  for (const auto& m : s.vw) vw.push_back(detail::matrix_to_json(m));
  for (const auto& v : s.mb) mb.push_back(detail::vector_to_json(v));
  for (const auto& v : s.vb) vb.push_back(detail::vector_to_json(v));
  j["mw"] = std::move(mw);
  j["vw"] = std::move(vw);
  j["mb"] = std::move(mb);
  j["vb"] = std::move(vb);
  return j;
}

inline AdamState adam_from_json(const Json& j) {
  AdamState s;
  s.step = j.at("step").get<long>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  s.skipped = j.value("skipped", 0L);
  for (const auto& m : j.at("mw")) s.mw.push_back(detail::matrix_from_json(m));
  for (const auto& m : j.at("vw")) s.vw.push_back(detail::matrix_from_json(m));
  for (const auto& v : j.at("mb")) s.mb.push_back(detail::vector_from_json(v));
  for (const auto& v : j.at("vb")) s.vb.push_back(detail::vector_from_json(v));
  return s;
}

inline Json to_json(const TaskSpec& spec) {
  Json j;
  j["n_s"] = spec.n_s;
  j["n_c"] = spec.n_c;
  j["n_C"] = spec.n_cc;
  j["dynamics"] = to_string(spec.dynamics);
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  return j;
}

inline TaskSpec task_spec_from_json(const Json& j) {
  TaskSpec spec;
  spec.n_s = j.at("n_s").get<int>();
  spec.n_c = j.at("n_c").get<int>();
  spec.n_cc = j.at("n_C").get<int>();
  spec.dynamics = dynamics_kind_from_string(j.at("dynamics").get<std::string>());
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

inline Json to_json(const EnvTanhNet& net) {
  Json j;
  j["w1"] = detail::matrix_to_json(net.w1);
  j["w2"] = detail::matrix_to_json(net.w2);
  j["b1"] = detail::vector_to_json(net.b1);
  j["b2"] = detail::vector_to_json(net.b2);
  j["gain"] = net.gain;
  return j;
}

inline EnvTanhNet env_tanh_net_from_json(const Json& j) {
  EnvTanhNet net;
  net.w1 = detail::matrix_from_json(j.at("w1"));
  net.w2 = detail::matrix_from_json(j.at("w2"));
  net.b1 = detail::vector_from_json(j.at("b1"));
  net.b2 = detail::vector_from_json(j.at("b2"));
  net.gain = j.at("gain").get<double>();
  return net;
}

inline Json to_json(const Environment& env) {
  Json j;
  j["format"] = "cfrl-checkpoint";
  j["version"] = 1;
  j["kind"] = "environment";
  j["spec"] = to_json(env.spec);
  j["dt"] = env.dt;
  j["horizon"] = env.horizon;
  j["b_diag"] = detail::vector_to_json(env.b_diag);
  if (env.spec.dynamics == DynamicsKind::Linear) {
    j["lin_a"] = detail::matrix_to_json(env.lin_a);
    j["lin_g"] = detail::matrix_to_json(env.lin_g);
  } else {
    j["rel_net"] = to_json(env.rel_net);
    if (env.n_q() > env.n_a()) j["dist_net"] = to_json(env.dist_net);
  }
  return j;
}

inline Environment environment_from_json(const Json& j) {
  Environment env;
  env.spec = task_spec_from_json(j.at("spec"));
  env.dt = j.at("dt").get<double>();
  env.horizon = j.at("horizon").get<double>();
  env.b_diag = detail::vector_from_json(j.at("b_diag"));
  if (env.spec.dynamics == DynamicsKind::Linear) {
    env.lin_a = detail::matrix_from_json(j.at("lin_a"));
    env.lin_g = detail::matrix_from_json(j.at("lin_g"));
  } else {
    env.rel_net = env_tanh_net_from_json(j.at("rel_net"));
    if (j.contains("dist_net")) env.dist_net = env_tanh_net_from_json(j.at("dist_net"));
  }
  return env;
}

inline Json to_json(const Agent& agent) {
  Json j;
  j["format"] = "cfrl-checkpoint";
  j["version"] = 1;
  j["kind"] = "agent";
  j["method"] = to_string(agent.cfg.method);
  j["policy"] = to_json(agent.policy);
  j["shadow"] = to_json(agent.shadow);
  j["f_model"] = to_json(agent.f_model);
  j["opt_policy"] = to_json(agent.opt_policy);
  j["opt_shadow"] = to_json(agent.opt_shadow);
  j["opt_f"] = to_json(agent.opt_f);
  if (!agent.cprime_model.empty()) {
    j["cprime_model"] = to_json(agent.cprime_model);
    j["opt_cprime"] = to_json(agent.opt_cprime);
  }
  return j;
}

inline Json policy_checkpoint(const MlpNet& policy) {
  Json j;
  j["format"] = "cfrl-checkpoint";
  j["version"] = 1;
  j["kind"] = "policy";
  j["policy"] = to_json(policy);
  return j;
}

inline MlpNet policy_from_checkpoint(const Json& j) {
  if (j.contains("policy")) return mlp_from_json(j.at("policy"));
  return mlp_from_json(j);  // also accept a bare network
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1, '\t') << "\n";
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Json j;
  in >> j;
  return j;
}

inline void expect_kind(const Json& j, const std::string& kind) {
  if (j.value("format", "") != "cfrl-checkpoint" || j.value("kind", "") != kind)
    throw std::invalid_argument("checkpoint is not a cfrl " + kind + " file");
}

}  // namespace cfrl

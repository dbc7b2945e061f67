#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cfrl/rng.hpp"

namespace cfrl {

// Batches are (feature_dim x n_m) matrices: columns are samples.
using Batch = Eigen::MatrixXd;

enum class Activation { Relu, Linear, Tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "linear") return Activation::Linear;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

// Dense network shape: layer_sizes = {input, hidden..., output}. Hidden
// layers are rectifiers; the output layer is linear or tanh.
struct MlpSpec {
  std::vector<int> layer_sizes;
  Activation output_activation = Activation::Linear;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int n_layers() const { return static_cast<int>(layer_sizes.size()); }

  void validate() const {
    if (layer_sizes.size() < 3)
      throw std::invalid_argument("MlpSpec needs at least one hidden layer");
    for (const int n : layer_sizes)
      if (n < 1) throw std::invalid_argument("MlpSpec layer sizes must be positive");
    if (output_activation == Activation::Relu)
      throw std::invalid_argument("output activation must be linear or tanh");
  }

  bool operator==(const MlpSpec&) const = default;
};

inline long param_count(const MlpSpec& spec) {
  long n = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const long fan_in = spec.layer_sizes[l];
    const long fan_out = spec.layer_sizes[l + 1];
    n += fan_in * fan_out + fan_out;
  }
  return n;
}

struct MlpNet {
  MlpSpec spec;
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is (fan_out x fan_in)
  std::vector<Eigen::VectorXd> biases;

  bool empty() const { return weights.empty(); }
  std::size_t n_weight_layers() const { return weights.size(); }

  bool finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

// Scaled uniform init in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpNet make_mlp(MlpSpec spec, std::uint64_t seed) {
  spec.validate();
  MlpNet net;
  net.spec = spec;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = bound * rng.uniform_pm1();
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

// Per-layer inputs and pre-activations retained by forward for backward.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;    // inputs[l]: input to weight layer l
  std::vector<Eigen::MatrixXd> pre_acts;  // pre_acts[l]: W*x+b before activation
};

namespace detail {

inline void apply_activation(Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Linear: break;
  }
}

// Derivative of the activation evaluated at pre-activation z.
inline Eigen::ArrayXXd activation_deriv(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::Relu: return (z.array() > 0.0).cast<double>();
    case Activation::Tanh: return 1.0 - z.array().tanh().square();
    case Activation::Linear: return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
  }
  return {};
}

}  // namespace detail

inline Batch forward(const MlpNet& net, const Batch& x, ForwardCache* cache = nullptr) {
  if (x.rows() != net.spec.input_size())
    throw std::invalid_argument("forward: input has " + std::to_string(x.rows()) +
                                " features, spec wants " +
                                std::to_string(net.spec.input_size()));
  if (cache) {
    cache->inputs.clear();
    cache->pre_acts.clear();
  }
  Batch h = x;
  const std::size_t L = net.n_weight_layers();
  for (std::size_t l = 0; l < L; ++l) {
    if (cache) cache->inputs.push_back(h);
    Batch z = net.weights[l] * h;
    z.colwise() += net.biases[l];
    if (cache) cache->pre_acts.push_back(z);
    const Activation act = (l + 1 == L) ? net.spec.output_activation : Activation::Relu;
    detail::apply_activation(z, act);
    h = std::move(z);
  }
  return h;
}

struct MlpGradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;

  bool finite() const {
    for (const auto& g : dw)
      if (!g.allFinite()) return false;
    for (const auto& g : db)
      if (!g.allFinite()) return false;
    return true;
  }
};

inline MlpGradients zero_gradients(const MlpNet& net) {
  MlpGradients g;
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
    g.dw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.db.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

inline void accumulate(MlpGradients& into, const MlpGradients& from) {
  for (std::size_t l = 0; l < into.dw.size(); ++l) {
    into.dw[l] += from.dw[l];
    into.db[l] += from.db[l];
  }
}

struct BackwardResult {
  MlpGradients grads;  // d(sum over batch of dy . y) / d params
  Batch dx;            // same derivative w.r.t. the inputs, per column
};

namespace detail {

inline void check_cache(const MlpNet& net, const ForwardCache& cache, const Batch& dy) {
  const std::size_t L = net.n_weight_layers();
  if (cache.inputs.size() != L || cache.pre_acts.size() != L)
    throw std::invalid_argument("backward: cache does not match network depth");
  for (std::size_t l = 0; l < L; ++l) {
    if (cache.inputs[l].rows() != net.weights[l].cols() ||
        cache.pre_acts[l].rows() != net.weights[l].rows())
      throw std::invalid_argument("backward: cache shapes do not match network");
  }
  if (dy.rows() != net.spec.output_size() || dy.cols() != cache.inputs[0].cols())
    throw std::invalid_argument("backward: dy shape mismatch");
}

inline void backward_impl(const MlpNet& net, const ForwardCache& cache, const Batch& dy,
                          MlpGradients* grads, Batch* dx) {
  check_cache(net, cache, dy);
  const std::size_t L = net.n_weight_layers();
  if (grads) {
    grads->dw.resize(L);
    grads->db.resize(L);
  }
  Batch delta;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t l = L - 1 - i;
    const Activation act = (l + 1 == L) ? net.spec.output_activation : Activation::Relu;
    const Eigen::ArrayXXd dact = activation_deriv(cache.pre_acts[l], act);
    if (l + 1 == L)
      delta = (dy.array() * dact).matrix();
    else
      delta = (delta.array() * dact).matrix();
    if (grads) {
      grads->dw[l].noalias() = delta * cache.inputs[l].transpose();
      grads->db[l] = delta.rowwise().sum();
    }
    if (l > 0 || dx)
      delta = net.weights[l].transpose() * delta;  // becomes next (downstream) seed
    if (l == 0 && dx) *dx = delta;
  }
}

}  // namespace detail

// Exact reverse-mode derivatives of sum_batch(dy . output). Parameter
// gradients are summed over the batch; dx is per column.
inline BackwardResult backward(const MlpNet& net, const ForwardCache& cache, const Batch& dy) {
  BackwardResult r;
  detail::backward_impl(net, cache, dy, &r.grads, &r.dx);
  return r;
}

inline MlpGradients backward_params(const MlpNet& net, const ForwardCache& cache,
                                    const Batch& dy) {
  MlpGradients g;
  detail::backward_impl(net, cache, dy, &g, nullptr);
  return g;
}

inline Batch backward_input(const MlpNet& net, const ForwardCache& cache, const Batch& dy) {
  Batch dx;
  detail::backward_impl(net, cache, dy, nullptr, &dx);
  return dx;
}

}  // namespace cfrl

#pragma once

#include <cmath>
#include <vector>

#include "cfrl/mlp.hpp"

namespace cfrl {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long skipped = 0;  // updates dropped because of non-finite gradients
};

inline AdamState make_adam(const MlpNet& net, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
    s.mw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.vw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.mb.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    s.vb.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return s;
}

// One bias-corrected Adam step down the given gradient. Returns false (and
// leaves everything untouched) when the gradient is non-finite.
inline bool adam_step(MlpNet& net, const MlpGradients& grads, AdamState& state, double eta) {
  if (eta < 0.0) throw std::invalid_argument("adam_step: eta must be >= 0");
  if (grads.dw.size() != net.n_weight_layers())
    throw std::invalid_argument("adam_step: gradient/network layer mismatch");
  if (!grads.finite()) {
    ++state.skipped;
    return false;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.n_weight_layers(); ++l) {
    state.mw[l] = state.beta1 * state.mw[l] + (1.0 - state.beta1) * grads.dw[l];
    state.vw[l] = state.beta2 * state.vw[l].array() +
                  (1.0 - state.beta2) * grads.dw[l].array().square();
    net.weights[l].array() -=
        eta * (state.mw[l].array() / bc1) / ((state.vw[l].array() / bc2).sqrt() + state.eps);

    state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * grads.db[l];
    state.vb[l] = state.beta2 * state.vb[l].array() +
                  (1.0 - state.beta2) * grads.db[l].array().square();
    net.biases[l].array() -=
        eta * (state.mb[l].array() / bc1) / ((state.vb[l].array() / bc2).sqrt() + state.eps);
  }
  return true;
}

}  // namespace cfrl

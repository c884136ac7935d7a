#pragma once

#include <cmath>

#include "voi/nn/tensor.hpp"

namespace voi::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

inline void validate(const AdamConfig& c) {
  if (!(c.lr > 0)) throw Error("Adam learning rate must be positive");
  if (!(c.beta1 > 0 && c.beta1 < 1) || !(c.beta2 > 0 && c.beta2 < 1))
    throw Error("Adam betas must lie in (0, 1)");
  if (!(c.epsilon > 0)) throw Error("Adam epsilon must be positive");
}

/// One bias-corrected Adam update of every trainable parameter that has a gradient.
/// `step` is the 1-based update count.
template <typename T>
void adam_step(ParameterStore<T>& store, const Gradients<T>& grads, const AdamConfig& cfg, long step) {
  validate(cfg);
  if (step < 1) throw Error("Adam step index must be >= 1");
  if (grads.size() != store.size()) throw Error("gradient list does not match the parameter store");
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    const auto& g = grads[i];
    if (!e.trainable || g.empty()) continue;
    require_shape(g, e.value.shape, "gradient of '" + e.name + "'");
    if (e.m.empty()) {
      e.m = Tensor<T>(e.value.shape, T(0));
      e.v = Tensor<T>(e.value.shape, T(0));
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double gk = g[k];
      const double m = cfg.beta1 * e.m[k] + (1 - cfg.beta1) * gk;
      const double v = cfg.beta2 * e.v[k] + (1 - cfg.beta2) * gk * gk;
      e.m[k] = static_cast<T>(m);
      e.v[k] = static_cast<T>(v);
      e.value[k] = static_cast<T>(e.value[k] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon));
    }
  }
}

}  // namespace voi::nn

#pragma once

#include <functional>

#include "voi/nn/ops.hpp"

namespace voi::nn {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t probes = 0;
  std::size_t skipped = 0;  // probes straddling a kink (one-sided slopes disagree)
};

struct GradCheckOptions {
  double step = 1e-6;          // 1e-3 is the usual choice at 32-bit precision
  std::size_t max_probes = 64;  // per input tensor
  double denom_floor = 1e-3;    // relative error = |a - n| / max(|a|, |n|, floor)
  double kink_tolerance = 1e-2;
};

/// Function under test: builds its output from the given input vars on the given tape.
using GradFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Compares tape gradients with central finite differences of sum(f(x) * r) for a fixed
/// random weighting r. Probe coordinates where the forward and backward one-sided slopes
/// disagree by more than kink_tolerance sit on a non-differentiable point and are skipped.
inline GradCheckResult grad_check(const GradFn& f, const std::vector<Tensor<double>>& inputs,
                                  std::uint64_t seed, const GradCheckOptions& opt = {}) {
  Rng rng(seed);
  Tensor<double> weights;
  auto objective = [&](const std::vector<Tensor<double>>& xs, std::vector<Tensor<double>>* grads) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.leaf(x, grads != nullptr));
    Var<double> out = f(tape, vars);
    if (weights.empty()) {
      weights = Tensor<double>(out.shape());
      for (auto& w : weights.data) w = rng.uniform(-1, 1);
    }
    Var<double> s = weighted_sum(out, weights);
    if (grads) {
      tape.backward(s);
      grads->clear();
      for (const auto& v : vars)
        grads->push_back(tape.has_grad(v) ? tape.grad(v) : Tensor<double>(v.shape(), 0.0));
    }
    return s.value()[0];
  };

  std::vector<Tensor<double>> analytic;
  const double f0 = objective(inputs, &analytic);
  GradCheckResult res;
  auto xs = inputs;
  for (std::size_t in = 0; in < xs.size(); ++in) {
    const std::size_t n = xs[in].size();
    std::vector<std::size_t> coords;
    if (n <= opt.max_probes) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < opt.max_probes; ++i) coords.push_back(rng.index(n));
    }
    for (auto k : coords) {
      const double orig = xs[in][k];
      xs[in][k] = orig + opt.step;
      const double fp = objective(xs, nullptr);
      xs[in][k] = orig - opt.step;
      const double fm = objective(xs, nullptr);
      xs[in][k] = orig;
      const double fwd = (fp - f0) / opt.step, bwd = (f0 - fm) / opt.step;
      if (std::abs(fwd - bwd) > opt.kink_tolerance * std::max(1.0, std::abs(fwd) + std::abs(bwd))) {
        ++res.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2 * opt.step);
      const double a = analytic[in][k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
      res.max_rel_error = std::max(res.max_rel_error, err);
      ++res.probes;
    }
  }
  return res;
}

/// Same check against every trainable tensor of a parameter store. `f` builds the output
/// from the store on a fresh tape (it must request parameters through Tape::param).
inline GradCheckResult grad_check_params(ParameterStore<double>& store,
                                         const std::function<Var<double>(Tape<double>&)>& f,
                                         std::uint64_t seed, const GradCheckOptions& opt = {}) {
  Rng rng(seed);
  Tensor<double> weights;
  auto objective = [&](Gradients<double>* grads) {
    Tape<double> tape;
    Var<double> out = f(tape);
    if (weights.empty()) {
      weights = Tensor<double>(out.shape());
      for (auto& w : weights.data) w = rng.uniform(-1, 1);
    }
    Var<double> s = weighted_sum(out, weights);
    if (grads) {
      tape.backward(s);
      *grads = tape.gradients(store);
    }
    return s.value()[0];
  };
  Gradients<double> analytic;
  const double f0 = objective(&analytic);
  GradCheckResult res;
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& e = store.entry(p);
    if (!e.trainable) continue;
    const std::size_t n = e.value.size();
    std::vector<std::size_t> coords;
    if (n <= opt.max_probes) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < opt.max_probes; ++i) coords.push_back(rng.index(n));
    }
    for (auto k : coords) {
      const double orig = e.value[k];
      e.value[k] = orig + opt.step;
      const double fp = objective(nullptr);
      e.value[k] = orig - opt.step;
      const double fm = objective(nullptr);
      e.value[k] = orig;
      const double fwd = (fp - f0) / opt.step, bwd = (f0 - fm) / opt.step;
      if (std::abs(fwd - bwd) > opt.kink_tolerance * std::max(1.0, std::abs(fwd) + std::abs(bwd))) {
        ++res.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2 * opt.step);
      const double a = analytic[p].empty() ? 0.0 : analytic[p][k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
      res.max_rel_error = std::max(res.max_rel_error, err);
      ++res.probes;
    }
  }
  return res;
}

}  // namespace voi::nn

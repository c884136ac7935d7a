#pragma once

#include "voi/nn/ops.hpp"

namespace voi::nn {

// Parameter naming: "<layer>.weight", "<layer>.bias", "<layer>.gamma", "<layer>.beta",
// "<layer>.running_mean", "<layer>.running_var".

template <typename T>
void add_conv(ParameterStore<T>& s, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
              Rng& rng, bool bias = true) {
  s.add(name + ".weight", he_normal<T>({out, in, k, k}, in * k * k, rng));
  if (bias) s.add(name + ".bias", Tensor<T>({out}, T(0)));
}

template <typename T>
void add_conv_transpose(ParameterStore<T>& s, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t k, Rng& rng, bool bias = true) {
  s.add(name + ".weight", he_normal<T>({in, out, k, k}, in * k * k, rng));
  if (bias) s.add(name + ".bias", Tensor<T>({out}, T(0)));
}

template <typename T>
void add_dense(ParameterStore<T>& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  s.add(name + ".weight", normal_init<T>({out, in}, std::sqrt(1.0 / double(in)), rng));
  s.add(name + ".bias", Tensor<T>({out}, T(0)));
}

template <typename T>
void add_norm(ParameterStore<T>& s, const std::string& name, std::size_t channels, bool running_stats) {
  s.add(name + ".gamma", Tensor<T>({channels}, T(1)));
  s.add(name + ".beta", Tensor<T>({channels}, T(0)));
  if (running_stats) {
    s.add(name + ".running_mean", Tensor<T>({channels}, T(0)), false);
    s.add(name + ".running_var", Tensor<T>({channels}, T(1)), false);
  }
}

template <typename T>
std::optional<Var<T>> maybe_param(Tape<T>& t, ParameterStore<T>& s, const std::string& name, bool track) {
  if (!s.contains(name)) return std::nullopt;
  return t.param(s, name, track);
}

template <typename T>
Var<T> conv_layer(Var<T> x, ParameterStore<T>& s, const std::string& name, Conv2dOptions opt, bool track = true) {
  Tape<T>& t = *x.tape;
  return conv2d(x, t.param(s, name + ".weight", track), maybe_param(t, s, name + ".bias", track), opt);
}

template <typename T>
Var<T> dense_layer(Var<T> x, ParameterStore<T>& s, const std::string& name, bool track = true) {
  Tape<T>& t = *x.tape;
  return dense(x, t.param(s, name + ".weight", track), maybe_param(t, s, name + ".bias", track));
}

template <typename T>
Var<T> batch_norm_layer(Var<T> x, ParameterStore<T>& s, const std::string& name, bool training,
                        bool track = true) {
  Tape<T>& t = *x.tape;
  BatchNormOptions opt;
  opt.training = training;
  return batch_norm(x, t.param(s, name + ".gamma", track), t.param(s, name + ".beta", track),
                    s.value(name + ".running_mean"), s.value(name + ".running_var"), opt);
}

template <typename T>
Var<T> instance_norm_layer(Var<T> x, ParameterStore<T>& s, const std::string& name, bool track = true) {
  Tape<T>& t = *x.tape;
  return instance_norm(x, t.param(s, name + ".gamma", track), t.param(s, name + ".beta", track));
}

}  // namespace voi::nn

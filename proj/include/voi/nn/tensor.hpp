#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "voi/common.hpp"

namespace voi::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major tensor. Image batches are NCHW.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {
    for (auto d : shape)
      if (d == 0) throw Error("tensor dimensions must be positive: " + shape_str(shape));
  }
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape))
      throw Error("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                  shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& expected, std::string_view what) {
  if (t.shape != expected)
    throw Error(std::string(what) + ": expected shape " + shape_str(expected) + ", got " + shape_str(t.shape));
}

/// He-normal initializer: N(0, 2 / fan_in).
template <typename T>
Tensor<T> he_normal(Shape s, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(s));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * sd);
  return t;
}

template <typename T>
Tensor<T> normal_init(Shape s, double sd, Rng& rng) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * sd);
  return t;
}

/// Named parameters plus Adam moments. Non-trainable entries hold buffers such as
/// batch-norm running statistics.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
    Tensor<T> m, v;  // Adam moments, allocated on first update
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value), trainable, {}, {}});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t id(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }
  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Tensor<T>& value(const std::string& name) { return entries_[id(name)].value; }
  const Tensor<T>& value(const std::string& name) const { return entries_[id(name)].value; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Overwrites a value in place; shapes are immutable after creation.
  void assign(const std::string& name, const Tensor<T>& value) {
    auto& e = entries_[id(name)];
    require_shape(value, e.value.shape, "parameter '" + name + "'");
    e.value.data = value.data;
  }

  std::size_t parameter_count(bool trainable_only = true) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable || !trainable_only) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-parameter gradients aligned with ParameterStore ids; empty tensors mean "no gradient".
template <typename T>
using Gradients = std::vector<Tensor<T>>;

}  // namespace voi::nn

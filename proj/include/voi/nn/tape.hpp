#pragma once

#include <deque>
#include <functional>
#include <map>
#include <utility>

#include "voi/nn/tensor.hpp"

namespace voi::nn {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape; }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// index order is a reverse topological order and backward() visits each node once.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}); }
  Var<T> leaf(Tensor<T> value, bool requires_grad = true) { return push(std::move(value), requires_grad, {}); }

  /// Parameter leaf; repeated requests on one tape return the same node.
  /// `track = false` records it as a constant (frozen for this pass).
  Var<T> param(ParameterStore<T>& store, const std::string& name, bool track = true) {
    const std::size_t pid = store.id(name);
    const auto key = std::make_pair(static_cast<const void*>(&store), pid);
    if (const auto it = params_.find(key); it != params_.end()) return {this, it->second};
    const auto& e = store.entry(pid);
    Var<T> v = push(e.value, track && e.trainable, {});
    params_[key] = v.id;
    return v;
  }

  /// Records an op output. The node requires a gradient iff any input does.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || nodes_[in.id].requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }

  /// Gradient buffer of a node, zero-initialized on first access.
  Tensor<T>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape, T(0));
    return n.grad;
  }
  Tensor<T>& grad(Var<T> v) { return grad(v.id); }
  bool has_grad(Var<T> v) const { return !nodes_[v.id].grad.empty(); }

  /// Seeds d(loss)/d(loss) = 1 for every element and propagates to all recorded inputs.
  void backward(Var<T> loss) {
    auto& g = grad(loss.id);
    std::fill(g.data.begin(), g.data.end(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  /// Gradients for every tracked parameter of `store` touched by this tape.
  Gradients<T> gradients(const ParameterStore<T>& store) {
    Gradients<T> out(store.size());
    for (const auto& [key, node] : params_) {
      if (key.first != static_cast<const void*>(&store)) continue;
      if (!nodes_[node].requires_grad) continue;
      out[key.second] = grad(node);
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back({std::move(value), {}, requires_grad, std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::map<std::pair<const void*, std::size_t>, std::size_t> params_;
};

}  // namespace voi::nn

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aif/common.hpp"
#include "aif/rng.hpp"

namespace aif {

// Thread-local tape switch. While disabled, ops produce plain constants
// (used for teacher passes and evaluation).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct TensorNode;

// Transient per-backward gradient buffers, keyed by node. Backward closures
// accumulate into these; persistent .grad fields are only updated for nodes
// with requires_grad once propagation finishes.
template <class T>
class GradMap {
 public:
  std::vector<T>& buf(TensorNode<T>* n) {
    auto& v = map_[n];
    if (v.empty()) v.assign(n->data.size(), T(0));
    return v;
  }
  std::vector<T>* find(TensorNode<T>* n) {
    auto it = map_.find(n);
    return it == map_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<TensorNode<T>*, std::vector<T>> map_;
};

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // persistent, accumulated across backward() calls
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  // Scatters this node's transient gradient into its parents' buffers.
  std::function<void(const std::vector<T>&, GradMap<T>&)> backward_fn;
};

// Multi-dimensional differentiable array, row-major storage. The graph is
// define-by-run: every op records parents and a backward closure while
// grad_mode() is on and some input requires gradients. backward() may be
// called repeatedly; gradients of requires_grad tensors accumulate until
// zero_grad().
template <class T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() : node_(std::make_shared<Node>()) {}

  Tensor(Shape shape, T fill) : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->data.assign(static_cast<std::size_t>(shape_numel(node_->shape)), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
    const auto n = shape_numel(shape);
    check(static_cast<std::int64_t>(values.size()) == n,
          "tensor: data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor zeros(const Shape& s) { return Tensor(s, T(0)); }
  static Tensor full(const Shape& s, T v) { return Tensor(s, v); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  static Tensor randn(const Shape& s, Rng& rng, T stddev = T(1), T mean = T(0)) {
    Tensor t(s, T(0));
    for (auto& x : t.data()) x = static_cast<T>(rng.normal(mean, stddev));
    return t;
  }

  static Tensor uniform(const Shape& s, Rng& rng, T lo, T hi) {
    Tensor t(s, T(0));
    for (auto& x : t.data()) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  T value_at(std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (node_->grad.empty()) throw std::logic_error("tensor: gradient not populated; call backward() first");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    check(numel() == 1, "tensor: item() requires a scalar, shape is " + shape_str(shape()));
    return node_->data[0];
  }

  bool is_leaf() const { return node_->parents.empty(); }

  // Same data buffer, no graph, no gradient tracking.
  Tensor detach() const {
    Tensor t;
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  // Reverse-mode pass from a scalar. Graph traversal order is fixed by
  // construction order, so results are deterministic. Calling twice without
  // zero_grad() accumulates (documented behavior).
  void backward() {
    check(numel() == 1, "backward: loss must be a scalar, shape is " + shape_str(shape()));
    std::vector<Node*> order;
    topo_order(order);
    GradMap<T> gmap;
    gmap.buf(node_.get())[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      auto* g = gmap.find(n);
      if (g == nullptr) continue;  // no gradient flow reached this node
      if (n->requires_grad) {
        if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
        for (std::size_t i = 0; i < g->size(); ++i) n->grad[i] += (*g)[i];
      }
      if (n->backward_fn) n->backward_fn(*g, gmap);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Internal: build an op result. Records the tape only when tracking is on
  // and at least one parent requires grad.
  static Tensor make_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                        std::function<void(const std::vector<T>&, GradMap<T>&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    if (!grad_mode()) return out;
    bool track = false;
    for (const auto& p : parents) track = track || p.requires_grad();
    if (!track) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  void topo_order(std::vector<Node*>& order) const {
    // iterative post-order over parents
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Named parameter, the unit optimizers and checkpoints work with.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
};

template <class T>
inline std::uint64_t hash_params(const std::vector<Param<T>>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.data().data(), p.value.data().size() * sizeof(T), h);
  }
  return h;
}

}  // namespace aif

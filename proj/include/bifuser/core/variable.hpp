#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bifuser/core/errors.hpp"
#include "bifuser/core/tensor.hpp"

namespace bifuser {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording within a scope (inference mode).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename S>
class Var;

/// One node of the reverse-mode tape. `backprop` reads this node's grad and
/// accumulates into the parents' grads; it is only installed while grad mode
/// is on and some parent requires grad, so inference builds no graph.
template <typename S>
struct GradNode {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  bool grad_set = false;
  std::vector<Var<S>> parents;
  std::function<void(GradNode<S>&)> backprop;

  void ensure_grad() {
    if (!grad_set) {
      grad = Tensor<S>::zeros(value.shape());
      grad_set = true;
    }
  }
};

template <typename S>
class Var {
 public:
  Var() = default;
  /// Constant leaf (no gradient).
  explicit Var(Tensor<S> value) : node_(std::make_shared<GradNode<S>>()) {
    node_->value = std::move(value);
  }

  /// Trainable leaf.
  static Var param(Tensor<S> value) {
    Var v(std::move(value));
    v.node_->requires_grad = true;
    return v;
  }

  static Var make_op(Tensor<S> value, std::vector<Var> parents,
                     std::function<void(GradNode<S>&)> backprop) {
    Var v(std::move(value));
    if (grad_enabled()) {
      bool needs = false;
      for (const auto& p : parents) needs = needs || p.requires_grad();
      if (needs) {
        v.node_->requires_grad = true;
        v.node_->parents = std::move(parents);
        v.node_->backprop = std::move(backprop);
      }
    }
    return v;
  }

  // Var is a shared handle onto its node; accessors are const in the
  // shared_ptr sense and hand out mutable references.
  bool defined() const { return node_ != nullptr; }
  Tensor<S>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index size() const { return node_->value.size(); }
  Index dim(int i) const { return node_->value.dim(i); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad_set; }
  Tensor<S>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void accumulate_grad(const Tensor<S>& g) const {
    if (!node_->requires_grad) return;
    node_->ensure_grad();
    node_->grad.array() += g.array();
  }
  void zero_grad() const {
    if (node_) {
      node_->grad_set = false;
      node_->grad = Tensor<S>();
    }
  }

  /// Same value, cut off from the graph.
  Var detach() const { return Var(node_->value); }

  GradNode<S>* node() const { return node_.get(); }

 private:
  std::shared_ptr<GradNode<S>> node_;
};

/// Runs reverse-mode accumulation from a scalar root.
template <typename S>
void backward(const Var<S>& root) {
  if (root.size() != 1) throw ShapeMismatch("backward expects a scalar root");
  if (!root.requires_grad()) return;

  // Iterative topological order over the parent DAG.
  std::vector<GradNode<S>*> order;
  std::unordered_set<GradNode<S>*> visited;
  struct Frame {
    GradNode<S>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      GradNode<S>* p = f.node->parents[f.next_parent++].node();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad.array().setConstant(S(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    GradNode<S>* n = *it;
    if (n->backprop && n->grad_set) n->backprop(*n);
  }
}

}  // namespace bifuser

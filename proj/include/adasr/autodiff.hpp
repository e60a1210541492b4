#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "adasr/tensor.hpp"

namespace adasr {

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
inline std::uint64_t next_node_id() {
  thread_local std::uint64_t id = 0;
  return ++id;
}
}  // namespace detail

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;  // lazily allocated
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backward_fn;

  Tensor<S>& ensure_grad() {
    if (grad.empty()) grad = Tensor<S>::zeros(value.shape);
    return grad;
  }
};

// Handle to a graph node. Copies share the node.
template <typename S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

  static Var constant(Tensor<S> t) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(t);
    n->id = detail::next_node_id();
    return Var(std::move(n));
  }

  // Trainable leaf.
  static Var leaf(Tensor<S> t) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(t);
    n->requires_grad = true;
    n->id = detail::next_node_id();
    return Var(std::move(n));
  }

  // Handle semantics: a const Var is a const handle to a mutable node.
  bool defined() const { return n_ != nullptr; }
  const Tensor<S>& value() const { return n_->value; }
  Tensor<S>& mutable_value() const { return n_->value; }
  const Shape& shape() const { return n_->value.shape; }
  Tensor<S>& grad() const { return n_->ensure_grad(); }
  bool has_grad() const { return !n_->grad.empty(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  std::shared_ptr<Node<S>> node() const { return n_; }

  void zero_grad() const {
    if (n_ && !n_->grad.empty()) std::fill(n_->grad.data.begin(), n_->grad.data.end(), S(0));
  }

  Var detach() const { return constant(n_->value); }

 private:
  std::shared_ptr<Node<S>> n_;
};

// Builds an op node. The backward_fn reads node.grad and accumulates into the
// parents' grads. Graph edges are dropped when grad mode is off or no parent
// needs gradients, so inference pays only for the forward value.
template <typename S>
Var<S> make_op(Tensor<S> out, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> backward_fn) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(out);
  n->id = detail::next_node_id();
  bool need = false;
  if (detail::grad_mode()) {
    for (const auto& p : parents)
      if (p.requires_grad()) {
        need = true;
        break;
      }
  }
  if (need) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<S>(std::move(n));
}

// Reverse pass from `root`, seeding with ones. Node ids are creation-ordered,
// which is a valid topological order of the DAG.
template <typename S>
void backward(const Var<S>& root) {
  auto* r = root.node().get();
  if (!r || !r->requires_grad) return;
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<Node<S>*> stack{r};
  seen.insert(r);
  while (!stack.empty()) {
    Node<S>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      Node<S>* q = p.get();
      if (q->requires_grad && !seen.count(q)) {
        seen.insert(q);
        stack.push_back(q);
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node<S>* a, const Node<S>* b) { return a->id > b->id; });
  Tensor<S>& g = r->ensure_grad();
  for (auto& v : g.data) v = S(1);
  for (Node<S>* n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

}  // namespace adasr

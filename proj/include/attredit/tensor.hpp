#pragma once

// Dynamic reverse-mode autodiff over dense tensors.
//
// Every operation records its parents and a vector-Jacobian closure built
// from the same differentiable ops, so gradients of gradients work (needed
// by the critic gradient penalty). Graph traversal follows strictly
// decreasing creation order, which both guarantees topological validity
// and pins the gradient accumulation order, making backward deterministic.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "attredit/common.hpp"

namespace attredit {

class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool v) { flag() = v; }

 private:
  static bool& flag() {
    static thread_local bool f = true;
    return f;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev); }
};

struct EnableGradGuard {
  bool prev;
  EnableGradGuard() : prev(GradMode::enabled()) { GradMode::set(true); }
  ~EnableGradGuard() { GradMode::set(prev); }
};

inline uint64_t next_seq() {
  static std::atomic<uint64_t> c{0};
  return ++c;
}

template <typename S>
class Tensor;

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  bool requires_grad = false;
  bool used_as_root = false;
  uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<Tensor<S>> parents;
  // (self, upstream grad) -> per-parent grads; an undefined entry skips
  // that parent.
  std::function<std::vector<Tensor<S>>(const Tensor<S>&, const Tensor<S>&)>
      vjp;
  std::shared_ptr<Node<S>> grad_acc;  // leaf .grad storage
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return Tensor(std::make_shared<Node<S>>(
        Node<S>{std::move(shape), {}, false, false, next_seq()}))
        .alloc_();
  }
  static Tensor full(Shape shape, S v) {
    Tensor t = zeros(std::move(shape));
    for (S& x : t.node_->value) x = v;
    return t;
  }
  static Tensor scalar(S v) { return full({1}, v); }
  static Tensor from_vec(Shape shape, std::vector<S> v) {
    if (int64_t(v.size()) != attredit::numel(shape))
      throw ShapeError(cat("from_vec: ", v.size(), " values for shape ",
                           shape_str(shape)));
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(v);
    n->seq = next_seq();
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[i]; }
  int ndim() const { return int(node_->shape.size()); }
  int64_t numel() const { return int64_t(node_->value.size()); }

  // Const is shallow (handle semantics, like shared_ptr).
  std::span<S> values() const {
    return {node_->value.data(), node_->value.size()};
  }
  S item() const {
    if (numel() != 1)
      throw ShapeError(cat("item: tensor has ", numel(), " elements"));
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    if (v && node_->vjp)
      throw AutogradError("set_requires_grad: not a leaf tensor");
    node_->requires_grad = v;
    return *this;
  }

  // Accumulated gradient of a leaf after backward(); undefined if none.
  Tensor grad() const {
    return node_->grad_acc ? Tensor(node_->grad_acc) : Tensor();
  }
  void zero_grad() { node_->grad_acc = nullptr; }

  // Value copy with no graph history.
  Tensor detach() const {
    auto n = std::make_shared<Node<S>>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->seq = next_seq();
    return Tensor(std::move(n));
  }

  template <typename T2>
  Tensor<T2> cast() const {
    std::vector<T2> v(node_->value.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = T2(node_->value[i]);
    return Tensor<T2>::from_vec(node_->shape, std::move(v));
  }

  Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& handle() const { return node_; }

  explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

 private:
  Tensor& alloc_() {
    node_->value.assign(size_t(attredit::numel(node_->shape)), S(0));
    return *this;
  }
  std::shared_ptr<Node<S>> node_;
};

// Builds an op node. When grad mode is off or no parent requires grad the
// result is a plain leaf and the inputs are not retained.
template <typename S, typename Vjp>
Tensor<S> make_op(const char* name, Shape shape, std::vector<S> value,
                  std::vector<Tensor<S>> parents, Vjp&& vjp) {
  Tensor<S> out = Tensor<S>::from_vec(std::move(shape), std::move(value));
  bool need = false;
  if (GradMode::enabled())
    for (const auto& p : parents)
      if (p.defined() && p.requires_grad()) need = true;
  if (need) {
    Node<S>* n = out.node();
    n->requires_grad = true;
    n->op = name;
    n->parents = std::move(parents);
    n->vjp = std::forward<Vjp>(vjp);
  }
  return out;
}

namespace detail {

template <typename S>
std::vector<std::shared_ptr<Node<S>>> collect_graph(
    const std::shared_ptr<Node<S>>& root) {
  std::vector<std::shared_ptr<Node<S>>> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::shared_ptr<Node<S>>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (!p.defined() || !p.requires_grad()) continue;
      if (seen.insert(p.node()).second) stack.push_back(p.handle());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });
  return order;
}

template <typename S>
Tensor<S> add_grads(const Tensor<S>& a, const Tensor<S>& b);

// Runs the reverse sweep from root (seeded with 1) and returns the full
// adjoint map. Caller controls grad mode (on = build a gradient graph).
template <typename S>
std::unordered_map<Node<S>*, Tensor<S>> reverse_sweep(const Tensor<S>& root) {
  if (!root.defined() || root.numel() != 1)
    throw AutogradError(
        cat("backward: root must be a defined scalar, got ",
            root.defined() ? shape_str(root.shape()) : "undefined"));
  if (!root.requires_grad())
    throw AutogradError("backward: root does not require grad");
  auto order = collect_graph(root.handle());
  std::unordered_map<Node<S>*, Tensor<S>> adj;
  adj.reserve(order.size());
  adj[root.node()] = Tensor<S>::full({1}, S(1));
  for (const auto& n : order) {
    auto it = adj.find(n.get());
    if (it == adj.end()) continue;
    if (!n->vjp) continue;
    Tensor<S> self(n);
    std::vector<Tensor<S>> pg = n->vjp(self, it->second);
    if (pg.size() != n->parents.size())
      throw AutogradError(cat(n->op, ": vjp returned ", pg.size(),
                              " grads for ", n->parents.size(), " parents"));
    for (size_t i = 0; i < pg.size(); ++i) {
      const Tensor<S>& p = n->parents[i];
      if (!p.defined() || !p.requires_grad() || !pg[i].defined()) continue;
      if (pg[i].shape() != p.shape())
        throw AutogradError(cat(n->op, ": vjp grad ", i, " shape ",
                                shape_str(pg[i].shape()), " vs parent ",
                                shape_str(p.shape())));
      auto jt = adj.find(p.node());
      if (jt == adj.end())
        adj.emplace(p.node(), pg[i]);
      else
        jt->second = add_grads(jt->second, pg[i]);
    }
  }
  return adj;
}

}  // namespace detail

// Accumulates d(root)/d(leaf) into each reachable leaf's .grad. A root can
// be consumed once; rebuild the graph to differentiate again.
template <typename S>
void backward(const Tensor<S>& root) {
  if (root.defined() && root.node()->used_as_root)
    throw AutogradError(
        "backward: root already consumed; rebuild the graph before calling "
        "backward again");
  NoGradGuard ng;
  auto adj = detail::reverse_sweep(root);
  root.node()->used_as_root = true;
  for (auto& [n, g] : adj) {
    if (n->vjp || !n->requires_grad) continue;
    if (n->grad_acc) {
      auto& dst = n->grad_acc->value;
      auto src = g.values();
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else {
      // Copy: vjps may hand the same tensor to several parents, and .grad
      // is accumulated in place on later calls.
      n->grad_acc = g.detach().handle();
    }
  }
}

// Pure gradient query: returns d(root)/d(wrt) without touching .grad.
// With create_graph the results are differentiable.
template <typename S>
std::vector<Tensor<S>> grad(const Tensor<S>& root,
                            const std::vector<Tensor<S>>& wrt,
                            bool create_graph = false) {
  for (const auto& w : wrt)
    if (!w.defined() || !w.requires_grad())
      throw AutogradError("grad: wrt tensor does not require grad");
  std::unordered_map<Node<S>*, Tensor<S>> adj;
  if (create_graph) {
    EnableGradGuard eg;
    adj = detail::reverse_sweep(root);
  } else {
    NoGradGuard ng;
    adj = detail::reverse_sweep(root);
  }
  std::vector<Tensor<S>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = adj.find(w.node());
    if (it == adj.end())
      throw AutogradError(
          "grad: wrt tensor is not reachable from the root graph");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace attredit

#pragma once

// Dense row-major tensors with an attached reverse-mode tape.
//
// Every differentiable op produces a node that remembers its parents and a
// closure that pushes the node's gradient into them. Nodes carry a global
// sequence number, so sorting reachable nodes by that number gives the
// execution order of the tape; backward() walks it in reverse.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pcssm/errors.hpp"

namespace pcssm {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline std::uint64_t next_sequence_number() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t sequence = next_sequence_number();
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor data size " + std::to_string(data.size()) +
                           " does not match shape " + to_string(shape));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from_data(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  static Tensor parameter(Shape shape, std::vector<T> data) {
    return from_data(std::move(shape), std::move(data), true);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  // Row/column view: the last extent is the column count, everything before
  // it is folded into rows.
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  std::span<const T> data() const { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  // Writable storage of a leaf. Used by optimizers and finite-difference
  // probes; op results are immutable.
  std::span<T> mutable_data() {
    if (!node_->is_leaf) throw ContractError("mutable_data() on a non-leaf tensor");
    return node_->data;
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  Tensor detach() const { return from_data(shape(), node_->data, false); }

  std::vector<T> to_vector() const { return node_->data; }

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

namespace detail {

// Builds an op result. The backward closure only gets attached (and the
// parents retained) when at least one input requires a gradient.
template <typename T, typename Backward>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      Backward&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->is_leaf = false;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::forward<Backward>(backward);
  }
  return Tensor<T>(std::move(node));
}

// Adds `values` into the parent's gradient when that parent takes gradients.
template <typename T>
inline std::vector<T>* grad_sink(const std::shared_ptr<Node<T>>& parent) {
  return parent->requires_grad ? &parent->ensure_grad() : nullptr;
}

}  // namespace detail

// Reverse pass over the tape reachable from a scalar loss. Leaf gradients
// accumulate across calls; gradients of intermediate nodes are released.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that does not depend on any parameter");
  }
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<NodeT*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    NodeT* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const NodeT* a, const NodeT* b) { return a->sequence > b->sequence; });

  loss.node()->ensure_grad()[0] += T(1);
  for (NodeT* n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (NodeT* n : order) {
    if (!n->is_leaf) n->grad.clear();
  }
}

}  // namespace pcssm

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eeggaze/errors.hpp"

namespace eeggaze {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
/// Resolves a possibly negative axis against rank, throwing ShapeError.
std::size_t normalize_axis(int axis, std::size_t rank);

/// Checked mode turns NaN/Inf production and division by zero into
/// NumericError. It is process-wide and on by default.
void set_checked_mode(bool enabled);
bool checked_mode();

/// Graph recording for the calling thread. Off means ops produce detached
/// results even when inputs require grad.
void set_grad_enabled(bool enabled);
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward && !consumed; }
  /// Returns the grad buffer, allocating zeros on first use.
  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

}  // namespace detail

/// Row-major contiguous n-d array with optional reverse-mode gradient
/// tracking. Copies share the underlying node; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t extent(int axis) const { return node_->shape[normalize_axis(axis, rank())]; }

  std::span<const T> values() const { return node_->data; }
  /// Mutable access for initialization and optimizer updates only.
  std::span<T> values_mut() { return node_->data; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  void zero_grad();

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  /// New leaf with copied data and no gradient tracking.
  Tensor detach() const;
  /// New leaf with copied data that keeps the requires_grad flag.
  Tensor clone() const;

  /// Populates grad on every requires_grad leaf reachable from this scalar
  /// and releases the recorded graph.
  void backward() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Records the topological order used by backward(): every node appears
/// after all producers of its inputs.
template <typename T>
std::vector<detail::Node<T>*> topological_order(const Tensor<T>& root);

}  // namespace eeggaze

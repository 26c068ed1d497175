#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tbnet/network/tensor.hpp"

namespace tbnet {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs.
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

}  // namespace detail

/// Handle to a value in the reverse-mode graph. Copies share the node, so a
/// parameter held by a layer and by the parameter registry is the same tensor.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// In-place edits bypass the graph; only for parameters and buffers.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Zero-filled tensor of the value's shape when no gradient has flowed.
  Tensor grad() const;
  void zero_grad();

  /// Reverse pass from a scalar (seeded with 1).
  void backward() const;

  /// Records an op result. When gradients are disabled or no input needs
  /// them, the result is a constant and `fn` is dropped.
  static Var from_op(Tensor value, std::vector<Var> inputs, std::function<void(detail::Node&)> fn);

  detail::Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

/// Disables graph recording in its scope (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace tbnet

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "tdanet/tensor.h"

namespace tdanet {

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Every op result is a Node holding its value, the inputs it was computed
// from and a backward rule. Nodes are reference counted: with gradients
// disabled no inputs are retained, so inference frees activations eagerly.
// A graph is consumed by backward(); running backward through it again is a
// StateError.

bool grad_enabled();

// Disables graph recording for the current thread within its scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Finiteness assertions on every op output. Defaults to on unless NDEBUG.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  Tensor<T>* grad_sink = nullptr;  // leaf parameters accumulate here
  std::uint64_t order = 0;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";

  bool is_leaf() const { return !backward_fn; }
  // Zero-initialized on first access.
  Tensor<T>& grad_buffer();
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  // Graph leaf. With requires_grad the gradient is kept on the node.
  static Var leaf(Tensor<T> value, bool requires_grad = false);
  // Leaf whose gradient is accumulated into an external buffer.
  static Var parameter(const Tensor<T>& value, Tensor<T>* grad_sink);

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  bool defined() const { return static_cast<bool>(node_); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

  // Scalar convenience.
  T item() const { return node_->value[0]; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds a result node. Inputs and the backward rule are retained only when
// recording is on and some input needs a gradient.
template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn);

// Accumulates d(root)/d(leaf) into every reachable leaf. root must be scalar.
template <typename T>
void backward(const Var<T>& root);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Var<float>;
extern template class Var<double>;

}  // namespace tdanet

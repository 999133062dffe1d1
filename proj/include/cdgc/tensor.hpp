#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cdgc/errors.hpp"
#include "cdgc/rng.hpp"

namespace cdgc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
class Tensor;

/// Backing storage for one tensor plus its slot in the recorded tape.
///
/// `parents` holds the gradient-requiring inputs of the producing
/// operation; `backward` scatters this node's gradient into them.
/// Gradient buffers are allocated lazily and accumulated by addition.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

template <typename T>
void check_finite(const char* op, std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": operation produced a non-finite value");
    }
  }
}

/// Dense row-major tensor with an optional gradient slot.
///
/// Values are immutable once produced by an operation; only leaf
/// tensors (parameters, operation-free inputs) may be mutated through
/// mutable_values(). Default element type is float; differentiable code
/// is instantiated with double for gradient checking.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    auto node = std::make_shared<TensorNode<T>>();
    node->values.assign(shape_numel(shape), T(0));
    node->shape = std::move(shape);
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, T value) {
    std::vector<T> v(shape_numel(shape), value);
    return from(std::move(shape), std::move(v));
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  static Tensor from(Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("Tensor::from: " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    }
    check_finite<T>("Tensor::from", values);
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    return Tensor(std::move(node));
  }

  /// Seeded uniform fill in [lo, hi].
  static Tensor uniform(Shape shape, T lo, T hi, Rng& rng) {
    std::vector<T> v(shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return from(std::move(shape), std::move(v));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const T> values() const { return node_->values; }

  /// Leaf mutation hook for optimizers and check harnesses.
  std::span<T> mutable_values() { return node_->values; }

  T item() const {
    if (numel() != 1) throw UsageError("Tensor::item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->values[0];
  }

  T operator()(std::size_t i) const { return node_->values[i]; }
  T operator()(std::size_t i, std::size_t j) const {
    return node_->values[i * node_->shape[1] + j];
  }
  T operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return node_->values[(i * node_->shape[1] + j) * node_->shape[2] + k];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    return *this;
  }

  /// Accumulated gradient; empty span until backward touches this node.
  std::span<const T> grad() const { return node_->grad; }

  void zero_grad() { node_->grad.assign(node_->values.size(), T(0)); }

  /// Copy of the values with no tape attached.
  Tensor detach() const {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = node_->shape;
    node->values = node_->values;
    return Tensor(std::move(node));
  }

  /// Reverse-mode sweep from a scalar output. Seeds d(self)/d(self) = 1,
  /// then runs recorded backward functions in reverse topological order,
  /// accumulating into every reachable gradient-requiring node.
  void backward() {
    if (numel() != 1) {
      throw UsageError("Tensor::backward: output must be scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    std::vector<TensorNode<T>*> order = topo_order();
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<T>* n = *it;
      if (n->backward) {
        n->ensure_grad();
        n->backward(*n);
      }
    }
  }

  std::shared_ptr<TensorNode<T>>& node() { return node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  std::vector<TensorNode<T>*> topo_order() const {
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    struct Frame {
      TensorNode<T>* node;
      std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.node->parents.size()) {
        TensorNode<T>* p = f.node->parents[f.next++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<TensorNode<T>> node_;

  template <typename U>
  friend Tensor<U> make_op_result(const char* op, Shape shape, std::vector<U> values,
                                  std::vector<Tensor<U>> inputs,
                                  std::function<void(TensorNode<U>&)> backward);
};

/// Shared constructor for every differentiable operation: validates
/// finiteness, wires tape parents, and records the backward closure
/// only when some input actually requires gradients.
template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(TensorNode<T>&)> backward) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(std::string(op) + ": internal shape/value mismatch");
  }
  check_finite<T>(op, values);
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  for (const Tensor<T>& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      node->parents.push_back(in.node());
    }
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return Tensor<T>(std::move(node));
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace cdgc

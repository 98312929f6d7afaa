#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "mkdm/tensor.hpp"

namespace mkdm {

template <typename T>
class Tape;

/// A named trainable tensor. `grad` always has the value's shape and is
/// accumulated into by Tape::backward; callers zero it between steps.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }
};

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape<T>* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records forward values in execution order; backward() replays them in
/// reverse, so every node is visited once and after all of its consumers.
/// Recorded values are never modified.
template <typename T>
class Tape {
 public:
  /// Receives the gradient of the loss w.r.t. this node's output and
  /// accumulates into the gradients of its inputs via grad_sink().
  using BackwardFn = std::function<void(Tape&, const BasicTensor<T>& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(BasicTensor<T> value);
  /// Leaf bound to a parameter; its gradient flows into `param.grad`. The
  /// parameter is referenced, not copied, and must outlive the tape unchanged.
  Var<T> parameter(Parameter<T>& param);
  /// Records an operation result. `backward` is dropped when no input requires grad.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);

  const BasicTensor<T>& value(std::size_t id) const {
    const Node& node = nodes_.at(id);
    return node.param ? node.param->value : node.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient buffer for `v`, zero-initialised on first use; null when `v`
  /// does not require grad.
  BasicTensor<T>* grad_sink(const Var<T>& v);

  /// Gradient held by a node after the last backward(); empty if unreached.
  const BasicTensor<T>& grad(const Var<T>& v) const { return nodes_.at(v.id()).grad; }

  /// Backpropagates from a single-element loss. May be called repeatedly;
  /// node gradients are reset first, parameter gradients accumulate.
  void backward(const Var<T>& loss);

 private:
  struct Node {
    BasicTensor<T> value;  // unused for parameter leaves
    BasicTensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mkdm

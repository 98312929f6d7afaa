#include "mkdm/autodiff.hpp"

namespace mkdm {

template <typename T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& param) {
  if (param.grad.shape() != param.value.shape()) param.zero_grad();
  nodes_.push_back(Node{{}, {}, &param, grad_enabled_, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (in.tape() != this) throw ContractError("operand recorded on a different tape");
      needs = needs || nodes_.at(in.id()).requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, nullptr, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
BasicTensor<T>* Tape<T>::grad_sink(const Var<T>& v) {
  Node& node = nodes_.at(v.id());
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = BasicTensor<T>(value(v.id()).shape());
  return &node.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw ContractError("loss was recorded on a different tape");
  if (!grad_enabled_) throw ContractError("backward() on a tape recorded without gradients");
  const Node& root = nodes_.at(loss.id());
  const BasicTensor<T>& loss_value = value(loss.id());
  if (loss_value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss_value.shape()));
  }
  for (auto& node : nodes_) node.grad = BasicTensor<T>();
  if (!root.requires_grad) return;
  nodes_[loss.id()].grad = BasicTensor<T>(loss_value.shape(), T{1});

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.param) {
      auto g = node.param->grad.values();
      const auto src = node.grad.values();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += src[j];
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mkdm

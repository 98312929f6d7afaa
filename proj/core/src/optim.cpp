#include "mkdm/optim.hpp"

#include <cmath>

namespace mkdm {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamOptions& options) {
  if (options.lr <= 0) throw ContractError("adam: learning rate must be positive");
  if (state.first_moment.empty() && state.step == 0) {
    for (auto* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam: state tracks " + std::to_string(state.first_moment.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params[i]->value.shape();
    if (state.first_moment[i].shape() != shape || params[i]->grad.shape() != shape) {
      throw ContractError("adam: shape mismatch for parameter '" + params[i]->name + "'");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  const T b1 = static_cast<T>(options.beta1), b2 = static_cast<T>(options.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i]->value.values();
    const auto grad = params[i]->grad.values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const T g = grad[j];
      m[j] = b1 * m[j] + (T{1} - b1) * g;
      v[j] = b2 * v[j] + (T{1} - b2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= static_cast<T>(options.lr * m_hat / (std::sqrt(v_hat) + options.eps));
    }
  }
}

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, double lr) {
  if (lr <= 0) throw ContractError("sgd: learning rate must be positive");
  for (auto* p : params) {
    if (p->grad.shape() != p->value.shape()) throw ContractError("sgd: shape mismatch for '" + p->name + "'");
    auto value = p->value.values();
    const auto grad = p->grad.values();
    for (std::size_t j = 0; j < value.size(); ++j) value[j] -= static_cast<T>(lr * grad[j]);
  }
}

template void adam_step(std::span<Parameter<float>* const>, AdamState<float>&, const AdamOptions&);
template void adam_step(std::span<Parameter<double>* const>, AdamState<double>&, const AdamOptions&);
template void sgd_step(std::span<Parameter<float>* const>, double);
template void sgd_step(std::span<Parameter<double>* const>, double);

}  // namespace mkdm

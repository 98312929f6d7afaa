#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mkdm/autodiff.hpp"

namespace mkdm {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per parameter, in the order the parameters are passed.
template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> first_moment;
  std::vector<BasicTensor<T>> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update (descent) using each parameter's grad.
/// The state is lazily sized on the first call; afterwards the parameter
/// list must keep the same shapes or a ContractError is thrown.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamOptions& options);

/// Plain gradient descent: θ ← θ − lr·∇θ.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, double lr);

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

enum class OptimizerKind { adam, sgd };

/// Owns the optimizer state for one training run.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamOptions options) : kind_(kind), options_(options) {}

  void step(std::span<Parameter<T>* const> params) {
    if (kind_ == OptimizerKind::adam) {
      adam_step(params, state_, options_);
    } else {
      sgd_step(params, options_.lr);
      ++state_.step;
    }
  }

  std::int64_t steps() const noexcept { return state_.step; }
  const AdamState<T>& state() const noexcept { return state_; }

 private:
  OptimizerKind kind_;
  AdamOptions options_;
  AdamState<T> state_;
};

}  // namespace mkdm

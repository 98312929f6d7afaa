#pragma once

#include <functional>
#include <span>
#include <string>

#include "mkdm/autodiff.hpp"

namespace mkdm {

struct GradCheckResult {
  /// max over coordinates of |analytic − numeric| / max(1, |analytic|, |numeric|)
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients with central differences, in double
/// precision. `loss` must be deterministic (dropout off). Parameter values
/// are restored before returning; their grads are overwritten.
GradCheckResult fd_grad_check(const LossBuilder& loss, std::span<Parameter<double>* const> params,
                              double step = 1e-3);

}  // namespace mkdm

#include "mkdm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mkdm {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape<double> tape(false);
  return loss(tape).value().item();
}

}  // namespace

GradCheckResult fd_grad_check(const LossBuilder& loss, std::span<Parameter<double>* const> params, double step) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto out = loss(tape);
    tape.backward(out);
  }

  GradCheckResult result;
  for (auto* p : params) {
    auto values = p->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double up = evaluate(loss);
      values[i] = original - step;
      const double down = evaluate(loss);
      values[i] = original;

      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double err = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      ++result.coordinates;
      if (err > result.max_relative_error || result.worst_parameter.empty()) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_parameter = p->name;
          result.worst_index = i;
        }
      }
    }
  }
  return result;
}

}  // namespace mkdm

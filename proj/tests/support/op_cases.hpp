#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mkdm/gradcheck.hpp"
#include "mkdm/ops.hpp"
#include "test_support.hpp"

namespace mkdm::test {

using OpLoss = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  OpLoss build;
  double offset = 0.0;  // added to every parameter value, e.g. to keep logs away from 0
};

// Random fixed weights turn any output into a scalar whose gradient touches every element.
inline Var<double> weighted_sum(Tape<double>& tape, const Var<double>& v, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(v, tape.constant(random_tensor(v.shape(), rng))));
}

/// Central-difference check of one operation at random point `point`.
inline GradCheckResult check_op(const OpCase& op, std::uint64_t point) {
  Rng rng(derive_seed(point, op.name));
  std::vector<Parameter<double>> params;
  for (std::size_t i = 0; i < op.shapes.size(); ++i) {
    auto value = random_tensor(op.shapes[i], rng);
    for (auto& v : value.values()) v += op.offset;
    params.emplace_back("p" + std::to_string(i), value);
  }
  std::vector<Parameter<double>*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return fd_grad_check(
      [&](Tape<double>& tape) {
        std::vector<Var<double>> vars;
        for (auto& p : params) vars.push_back(tape.parameter(p));
        return weighted_sum(tape, op.build(tape, vars), 1000 + point);
      },
      ptrs);
}

/// Every differentiable operation, each wired into a small scalar loss.
inline std::vector<OpCase> op_cases() {
  static const std::vector<std::int32_t> ids = {3, 0, 3, 1};
  static const std::vector<std::int64_t> rows = {2, 0, 2};
  static const std::vector<std::int32_t> cols = {1, 0, 2};
  static const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 1, 1, 1, 1};
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](auto&, auto& v) { return ops::matmul(v[0], v[1]); }},
      {"linear", {{3, 4}, {4, 2}, {2}}, [](auto&, auto& v) { return ops::linear(v[0], v[1], v[2]); }},
      {"add", {{3, 4}, {3, 4}}, [](auto&, auto& v) { return ops::add(v[0], v[1]); }},
      {"add_bias", {{3, 4}, {4}}, [](auto&, auto& v) { return ops::add_bias(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto&, auto& v) { return ops::mul(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](auto&, auto& v) { return ops::scale(v[0], -1.7); }},
      {"sum", {{3, 4}}, [](auto&, auto& v) { return ops::sum(v[0]); }},
      {"mean", {{3, 4}}, [](auto&, auto& v) { return ops::mean(v[0]); }},
      {"sigmoid", {{3, 4}}, [](auto&, auto& v) { return ops::sigmoid(v[0]); }},
      {"gelu", {{3, 4}}, [](auto&, auto& v) { return ops::gelu(v[0]); }},
      {"softmax_rows", {{3, 4}}, [](auto&, auto& v) { return ops::softmax_rows(v[0]); }},
      {"layer_norm", {{3, 5}, {5}, {5}}, [](auto&, auto& v) { return ops::layer_norm(v[0], v[1], v[2]); }},
      {"dropout",
       {{3, 4}},
       [](auto&, auto& v) {
         Rng rng(42);  // same mask on every evaluation
         return ops::dropout(v[0], 0.3, rng, true);
       }},
      {"embedding", {{5, 3}}, [](auto&, auto& v) { return ops::embedding(v[0], std::span(ids)); }},
      {"select_rows", {{3, 4}}, [](auto&, auto& v) { return ops::select_rows(v[0], std::span(rows)); }},
      {"pick", {{3, 4}}, [](auto&, auto& v) { return ops::pick(v[0], std::span(cols)); }},
      {"neg_log", {{3, 4}}, [](auto&, auto& v) { return ops::neg_log(ops::sigmoid(v[0]), 1e-12); }},
      {"squared_error",
       {{3, 2}},
       [](auto&, auto& v) {
         Rng rng(7);
         return ops::squared_error(v[0], random_tensor({3, 2}, rng));
       }},
      {"sigmoid_cross_entropy",
       {{3, 2}},
       [](auto&, auto& v) { return ops::sigmoid_cross_entropy(v[0], TensorD({3, 2}, std::vector<double>{0, 1, 1, 0, 0.3, 0.8})); }},
      {"attention",
       {{8, 4}, {8, 4}, {8, 4}},
       [](auto&, auto& v) { return ops::attention(v[0], v[1], v[2], ops::AttentionLayout{2, 4, 2}, std::span(mask)); }},
      {"mlp",
       {{4, 3}, {3, 5}, {5}, {5, 2}},
       [](auto&, auto& v) { return ops::softmax_rows(ops::matmul(ops::gelu(ops::add_bias(ops::matmul(v[0], v[1]), v[2])), v[3])); }},
  };
}

}  // namespace mkdm::test

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mkdm/autodiff.hpp"

namespace mkdm {

/// Probability floor applied before the log in the golden-label loss.
inline constexpr double kProbabilityFloor = 1e-12;

/// One per-teacher relevance head: sigmoid(h₁·w + b).
template <typename T>
struct SoftHead {
  Parameter<T> weight;  // [h × 1]
  Parameter<T> bias;    // [1], absent when the heads are bias-free
};

/// The multi-task student layer: a two-way golden-label softmax head plus
/// one sigmoid head per teacher, all reading the [CLS] state h₁.
template <typename T>
struct StudentHeads {
  Parameter<T> golden_weight;  // [h × 2]
  Parameter<T> golden_bias;    // [2]
  std::vector<SoftHead<T>> soft;
  bool with_bias = true;

  static StudentHeads init(std::int32_t hidden, std::int32_t n_teachers, std::uint64_t seed, bool with_bias = true);

  std::int32_t n_teachers() const noexcept { return static_cast<std::int32_t>(soft.size()); }
  /// Parameters the heads add on top of the encoder: 2h+2 + n(h+1) with biases.
  std::int64_t parameter_count() const;

  void for_each_golden(const std::function<void(Parameter<T>&)>& fn);
  void for_each_soft(const std::function<void(Parameter<T>&)>& fn);
  void for_each(const std::function<void(Parameter<T>&)>& fn) {
    for_each_golden(fn);
    for_each_soft(fn);
  }

  template <typename U>
  StudentHeads<U> cast() const;
};

/// P(c | ⟨Q,P⟩) = softmax(h₁·W_g + b_g) → [batch × 2].
template <typename T>
Var<T> golden_forward(Tape<T>& tape, const Var<T>& cls, StudentHeads<T>& heads);

/// R_i = sigmoid(h₁·W_s,i + b_s,i) → [batch × 1]. Throws ContractError on a bad index.
template <typename T>
Var<T> soft_forward(Tape<T>& tape, const Var<T>& cls, StudentHeads<T>& heads, std::int32_t index);

/// Batch mean of −log max(P(gold), 1e-12).
template <typename T>
Var<T> golden_loss(const Var<T>& probs, std::span<const std::int32_t> gold);

/// Batch mean of (z − R)². Throws DataError when a target lies outside [0, 1].
template <typename T>
Var<T> soft_loss(const Var<T>& scores, std::span<const float> targets);

/// (1 − α)·l_g + α·(1/n)·Σ l_si. Soft losses may be empty only when α == 0.
template <typename T>
Var<T> combined_loss(const Var<T>& golden, std::span<const Var<T>> soft, double alpha);

// Plain-number forms of the same formulas.

double golden_loss_value(std::span<const double> probs, std::int32_t gold);
double soft_loss_value(double target, double score);
double combined_loss_value(double golden, std::span<const double> soft, double alpha);

/// Which heads contribute to the aggregated prediction O(⟨Q,P⟩).
struct AggregationPolicy {
  bool include_golden = true;
  bool include_soft = true;
};

/// (P(1) + Σ R_i) / (1 + n) with the golden head, Σ R_i / n without it.
/// Throws ConfigError when no head would contribute.
double aggregate_prediction(double golden_prob, std::span<const double> teacher_scores, bool include_golden);

/// Outputs of every head for one example.
struct PredictionBundle {
  double golden_prob = 0.5;
  std::vector<double> teacher_scores;
  double aggregate = 0.5;
};

PredictionBundle make_bundle(double golden_prob, std::vector<double> teacher_scores, const AggregationPolicy& policy);

extern template struct StudentHeads<float>;
extern template struct StudentHeads<double>;

}  // namespace mkdm

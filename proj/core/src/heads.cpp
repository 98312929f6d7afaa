#include "mkdm/heads.hpp"

#include <cmath>
#include <string>

#include "mkdm/encoder.hpp"
#include "mkdm/error.hpp"
#include "mkdm/ops.hpp"

namespace mkdm {
namespace {

constexpr double kHeadInitStddev = 0.02;

template <typename T>
Parameter<T> zeros(const std::string& name, Shape shape) {
  return Parameter<T>(name, BasicTensor<T>(std::move(shape)));
}

template <typename T, typename U>
Parameter<U> convert(const Parameter<T>& p) {
  if (p.value.empty()) {
    Parameter<U> out;
    out.name = p.name;
    return out;
  }
  return Parameter<U>(p.name, p.value.template cast<U>());
}

}  // namespace

template <typename T>
StudentHeads<T> StudentHeads<T>::init(std::int32_t hidden, std::int32_t n_teachers, std::uint64_t seed,
                                      bool with_bias) {
  if (hidden < 1) throw ConfigError("heads: hidden must be positive");
  if (n_teachers < 0) throw ConfigError("heads: teacher count must be >= 0");
  StudentHeads out;
  out.with_bias = with_bias;
  out.golden_weight = zeros<T>("heads.golden.weight", {hidden, 2});
  init_normal(out.golden_weight, seed, kHeadInitStddev);
  if (with_bias) out.golden_bias = zeros<T>("heads.golden.bias", {2});
  for (std::int32_t i = 0; i < n_teachers; ++i) {
    SoftHead<T> head;
    const std::string prefix = "heads.soft." + std::to_string(i);
    head.weight = zeros<T>(prefix + ".weight", {hidden, 1});
    init_normal(head.weight, seed, kHeadInitStddev);
    if (with_bias) head.bias = zeros<T>(prefix + ".bias", {1});
    out.soft.push_back(std::move(head));
  }
  return out;
}

template <typename T>
std::int64_t StudentHeads<T>::parameter_count() const {
  std::size_t n = golden_weight.value.size() + golden_bias.value.size();
  for (const auto& h : soft) n += h.weight.value.size() + h.bias.value.size();
  return static_cast<std::int64_t>(n);
}

template <typename T>
void StudentHeads<T>::for_each_golden(const std::function<void(Parameter<T>&)>& fn) {
  fn(golden_weight);
  if (with_bias) fn(golden_bias);
}

template <typename T>
void StudentHeads<T>::for_each_soft(const std::function<void(Parameter<T>&)>& fn) {
  for (auto& h : soft) {
    fn(h.weight);
    if (with_bias) fn(h.bias);
  }
}

template <typename T>
template <typename U>
StudentHeads<U> StudentHeads<T>::cast() const {
  StudentHeads<U> out;
  out.with_bias = with_bias;
  out.golden_weight = convert<T, U>(golden_weight);
  out.golden_bias = convert<T, U>(golden_bias);
  for (const auto& h : soft) out.soft.push_back({convert<T, U>(h.weight), convert<T, U>(h.bias)});
  return out;
}

template <typename T>
Var<T> golden_forward(Tape<T>& tape, const Var<T>& cls, StudentHeads<T>& heads) {
  const Var<T> bias = heads.with_bias ? tape.parameter(heads.golden_bias) : Var<T>{};
  return ops::softmax_rows(ops::linear(cls, tape.parameter(heads.golden_weight), bias));
}

template <typename T>
Var<T> soft_forward(Tape<T>& tape, const Var<T>& cls, StudentHeads<T>& heads, std::int32_t index) {
  if (index < 0 || index >= heads.n_teachers()) {
    throw ContractError("soft head index " + std::to_string(index) + " out of range for " +
                        std::to_string(heads.n_teachers()) + " teachers");
  }
  auto& head = heads.soft[static_cast<std::size_t>(index)];
  const Var<T> bias = heads.with_bias ? tape.parameter(head.bias) : Var<T>{};
  return ops::sigmoid(ops::linear(cls, tape.parameter(head.weight), bias));
}

template <typename T>
Var<T> golden_loss(const Var<T>& probs, std::span<const std::int32_t> gold) {
  if (probs.value().rank() != 2 || probs.value().cols() != 2) {
    throw DimensionError("golden_loss: expected [batch x 2] probabilities, got " + to_string(probs.shape()));
  }
  if (static_cast<std::int64_t>(gold.size()) != probs.value().rows()) {
    throw DimensionError("golden_loss: " + std::to_string(gold.size()) + " labels for " +
                         std::to_string(probs.value().rows()) + " rows");
  }
  for (auto c : gold) {
    if (c != 0 && c != 1) throw DataError(DataError::Kind::bad_label, "golden label must be 0 or 1");
  }
  return ops::mean(ops::neg_log(ops::pick(probs, gold), kProbabilityFloor));
}

template <typename T>
Var<T> soft_loss(const Var<T>& scores, std::span<const float> targets) {
  if (targets.size() != scores.value().size()) {
    throw DimensionError("soft_loss: " + std::to_string(targets.size()) + " targets for scores of shape " +
                         to_string(scores.shape()));
  }
  BasicTensor<T> z(scores.shape());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const float t = targets[i];
    if (!(t >= 0.0f && t <= 1.0f)) {
      throw DataError(DataError::Kind::out_of_range, "soft label " + std::to_string(t) + " outside [0, 1]");
    }
    z[static_cast<std::int64_t>(i)] = static_cast<T>(t);
  }
  return ops::mean(ops::squared_error(scores, z));
}

template <typename T>
Var<T> combined_loss(const Var<T>& golden, std::span<const Var<T>> soft, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (soft.empty()) {
    if (alpha > 0.0) throw ConfigError("alpha > 0 requires at least one teacher");
    return golden;
  }
  Var<T> total = soft[0];
  for (std::size_t i = 1; i < soft.size(); ++i) total = ops::add(total, soft[i]);
  const Var<T> soft_term = ops::scale(total, static_cast<T>(alpha / static_cast<double>(soft.size())));
  return ops::add(ops::scale(golden, static_cast<T>(1.0 - alpha)), soft_term);
}

double golden_loss_value(std::span<const double> probs, std::int32_t gold) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= probs.size()) {
    throw DataError(DataError::Kind::bad_label, "golden label out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(gold)], kProbabilityFloor));
}

double soft_loss_value(double target, double score) {
  if (!(target >= 0.0 && target <= 1.0)) throw DataError(DataError::Kind::out_of_range, "soft label outside [0, 1]");
  return (target - score) * (target - score);
}

double combined_loss_value(double golden, std::span<const double> soft, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (soft.empty()) {
    if (alpha > 0.0) throw ConfigError("alpha > 0 requires at least one teacher");
    return golden;
  }
  double s = 0.0;
  for (double v : soft) s += v;
  return (1.0 - alpha) * golden + alpha * s / static_cast<double>(soft.size());
}

double aggregate_prediction(double golden_prob, std::span<const double> teacher_scores, bool include_golden) {
  double s = 0.0;
  for (double r : teacher_scores) s += r;
  if (include_golden) return (golden_prob + s) / (1.0 + static_cast<double>(teacher_scores.size()));
  if (teacher_scores.empty()) throw ConfigError("aggregation needs the golden head or at least one teacher head");
  return s / static_cast<double>(teacher_scores.size());
}

PredictionBundle make_bundle(double golden_prob, std::vector<double> teacher_scores, const AggregationPolicy& policy) {
  PredictionBundle b;
  b.golden_prob = golden_prob;
  b.teacher_scores = std::move(teacher_scores);
  const std::span<const double> used =
      policy.include_soft ? std::span<const double>(b.teacher_scores) : std::span<const double>{};
  b.aggregate = aggregate_prediction(golden_prob, used, policy.include_golden);
  return b;
}

template struct StudentHeads<float>;
template struct StudentHeads<double>;
template StudentHeads<double> StudentHeads<float>::cast<double>() const;
template StudentHeads<float> StudentHeads<double>::cast<float>() const;
template StudentHeads<float> StudentHeads<float>::cast<float>() const;

#define MKDM_HEADS(T)                                                                                \
  template Var<T> golden_forward(Tape<T>&, const Var<T>&, StudentHeads<T>&);                       \
  template Var<T> soft_forward(Tape<T>&, const Var<T>&, StudentHeads<T>&, std::int32_t);           \
  template Var<T> golden_loss(const Var<T>&, std::span<const std::int32_t>);                       \
  template Var<T> soft_loss(const Var<T>&, std::span<const float>);                                \
  template Var<T> combined_loss(const Var<T>&, std::span<const Var<T>>, double);
MKDM_HEADS(float)
MKDM_HEADS(double)
#undef MKDM_HEADS

}  // namespace mkdm

#pragma once

// Differentiable operations over Tape-recorded values. Every op computes its
// forward value eagerly and, when an input requires grad, records the
// backward rule that accumulates into its inputs' gradients.

#include <cstdint>
#include <span>

#include "mkdm/autodiff.hpp"
#include "mkdm/rng.hpp"

namespace mkdm::ops {

/// [m×k]·[k×n] → [m×n]. Throws DimensionError naming both shapes.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// x·w + bias, with x [m×k], w [k×n], bias [n] (pass an invalid Var for none).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Adds a length-n vector to every row of an [m×n] input.
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// Sum of all elements as a rank-0 value.
template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <typename T>
Var<T> gelu(const Var<T>& x);

/// Row-wise softmax over the last dimension with per-row max subtraction.
template <typename T>
Var<T> softmax_rows(const Var<T>& x);

/// Per-row normalisation to zero mean / unit variance, then gain·x̂ + bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, double eps = 1e-12);

/// Inverted dropout. Identity (the same Var) when inactive or rate == 0.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Rng& rng, bool active);

/// Gathers rows of `table` [V×h] → [ids.size()×h].
template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids);

/// Rows `indices` of an [m×n] input → [indices.size()×n].
template <typename T>
Var<T> select_rows(const Var<T>& x, std::span<const std::int64_t> indices);

/// x[i, cols[i]] for each row of an [m×c] input → [m].
template <typename T>
Var<T> pick(const Var<T>& x, std::span<const std::int32_t> cols);

/// −log(max(x, floor)) elementwise; no gradient flows where the floor applies.
template <typename T>
Var<T> neg_log(const Var<T>& x, double floor);

/// (x − target)² elementwise against a constant target of the same size.
template <typename T>
Var<T> squared_error(const Var<T>& x, const BasicTensor<T>& target);

/// Binary cross-entropy of sigmoid(logits) against targets in [0, 1], elementwise.
template <typename T>
Var<T> sigmoid_cross_entropy(const Var<T>& logits, const BasicTensor<T>& target);

struct AttentionLayout {
  std::int64_t batch = 1;
  std::int64_t seq_len = 1;
  std::int64_t heads = 1;
};

/// Additive bias applied to masked key positions before the softmax.
inline constexpr double kMaskBias = -1e9;

/// Scaled dot-product attention over a batch of padded sequences.
/// q, k, v: [batch·seq_len × hidden]; key_mask: batch·seq_len flags, 1 = real
/// token. Per example and head: softmax(QKᵀ/√(hidden/heads) + bias)·V, heads
/// concatenated. Throws ContractError when an example has no real token.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const AttentionLayout& layout,
                 std::span<const std::uint8_t> key_mask);

}  // namespace mkdm::ops

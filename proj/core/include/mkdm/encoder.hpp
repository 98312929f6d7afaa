#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mkdm/autodiff.hpp"
#include "mkdm/ops.hpp"
#include "mkdm/rng.hpp"
#include "mkdm/text.hpp"

namespace mkdm {

struct EncoderConfig {
  std::int32_t layers = 3;
  std::int32_t hidden = 128;
  std::int32_t heads = 4;
  std::int32_t ffn = 512;
  double dropout = 0.1;
  std::int32_t max_len = 64;
  std::int32_t vocab_size = 0;
  bool trailing_sep = false;

  /// Throws ConfigError on layers < 1, hidden % heads != 0, and similar.
  void validate() const;

  /// BERT-base dimensions (768 hidden, 12 heads, 3072 feed-forward).
  static EncoderConfig bert_base(std::int32_t vocab_size, std::int32_t layers = 12);

  PairOptions pair_options() const { return {max_len, trailing_sep}; }

  /// Elements in one encoder block: 4h² + 2·h·ffn + 9h + ffn.
  std::int64_t layer_parameter_count() const;
  /// Elements in the token, segment and position tables.
  std::int64_t embedding_parameter_count() const;
  std::int64_t parameter_count() const {
    return embedding_parameter_count() + layers * layer_parameter_count();
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Names of the fields that differ between two configs.
std::vector<std::string> config_differences(const EncoderConfig& a, const EncoderConfig& b);

template <typename T>
struct EmbeddingTables {
  Parameter<T> token;     // [vocab × h]
  Parameter<T> segment;   // [2 × h]
  Parameter<T> position;  // [max_len × h]
};

template <typename T>
struct EncoderLayer {
  Parameter<T> query_w, query_b;
  Parameter<T> key_w, key_b;
  Parameter<T> value_w, value_b;
  Parameter<T> output_w, output_b;
  Parameter<T> attn_norm_gain, attn_norm_bias;
  Parameter<T> ffn_in_w, ffn_in_b;
  Parameter<T> ffn_out_w, ffn_out_b;
  Parameter<T> ffn_norm_gain, ffn_norm_bias;

  void for_each(const std::function<void(Parameter<T>&)>& fn);
};

/// Dropout switch plus the random stream it draws from.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;

  bool dropout_active() const { return train && rng != nullptr; }
};

/// Embedding tables plus the transformer stack: everything below the heads.
template <typename T>
struct Encoder {
  EncoderConfig config;
  EmbeddingTables<T> embeddings;
  std::vector<EncoderLayer<T>> layers;

  /// Random initialisation. Each parameter draws from its own stream derived
  /// from (seed, name), so adding or removing other parameters never changes it.
  static Encoder init(const EncoderConfig& config, std::uint64_t seed);

  /// Embedding tables first, then layers bottom-up, in a fixed order.
  void for_each(const std::function<void(Parameter<T>&)>& fn);
  std::vector<Parameter<T>*> parameters();

  template <typename U>
  Encoder<U> cast() const;
};

/// Fills `param` with N(0, stddev²) from the stream named by its own name.
template <typename T>
void init_normal(Parameter<T>& param, std::uint64_t seed, double stddev);

/// H_e[t] = token[id_t] + segment[seg_t] + position[pos_t], for every row of the batch.
template <typename T>
Var<T> embed_input(Tape<T>& tape, const EncodedBatch& batch, EmbeddingTables<T>& tables);

/// Multi-head self-attention sublayer with output projection.
template <typename T>
Var<T> self_attention(Tape<T>& tape, const Var<T>& input, EncoderLayer<T>& layer, const EncodedBatch& batch,
                      std::int32_t heads);

/// Post-layer-norm block:
///   H1  = LayerNorm(H + Dropout(Attn(H)))
///   out = LayerNorm(H1 + Dropout(FFN(H1))),  FFN = W2·gelu(W1·x + b1) + b2
template <typename T>
Var<T> encoder_block(Tape<T>& tape, const Var<T>& input, EncoderLayer<T>& layer, const EncodedBatch& batch,
                     const EncoderConfig& config, const ForwardMode& mode);

/// embed_input followed by every encoder block: H_s with shape [batch·seq_len × h].
template <typename T>
Var<T> encode(Tape<T>& tape, const EncodedBatch& batch, Encoder<T>& encoder, const ForwardMode& mode);

/// Row 0 ([CLS]) of each sequence in H_s → [batch × h].
template <typename T>
Var<T> extract_cls(const Var<T>& hidden_states, const EncodedBatch& batch);

extern template struct Encoder<float>;
extern template struct Encoder<double>;

}  // namespace mkdm

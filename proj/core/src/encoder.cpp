#include "mkdm/encoder.hpp"

#include <cmath>

namespace mkdm {
namespace {

constexpr double kInitStddev = 0.02;

template <typename T>
Parameter<T> make_param(const std::string& name, Shape shape, T fill = T{0}) {
  return Parameter<T>(name, BasicTensor<T>(std::move(shape), fill));
}

template <typename T>
Var<T> dense(Tape<T>& tape, const Var<T>& x, Parameter<T>& w, Parameter<T>& b) {
  return ops::linear(x, tape.parameter(w), tape.parameter(b));
}

template <typename T, typename U>
void copy_param(const Parameter<T>& src, Parameter<U>& dst) {
  dst = Parameter<U>(src.name, src.value.template cast<U>());
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder: layers must be >= 1, got " + std::to_string(layers));
  if (hidden < 1 || heads < 1) throw ConfigError("encoder: hidden and heads must be positive");
  if (hidden % heads != 0) {
    throw ConfigError("encoder: hidden " + std::to_string(hidden) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (ffn < 1) throw ConfigError("encoder: ffn must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0, 1)");
  if (max_len < 4) throw ConfigError("encoder: max_len must be >= 4");
  if (vocab_size <= kReservedCount) throw ConfigError("encoder: vocab_size must exceed the reserved tokens");
}

EncoderConfig EncoderConfig::bert_base(std::int32_t vocab_size, std::int32_t layers) {
  EncoderConfig c;
  c.layers = layers;
  c.hidden = 768;
  c.heads = 12;
  c.ffn = 3072;
  c.dropout = 0.1;
  c.max_len = 512;
  c.vocab_size = vocab_size;
  return c;
}

std::int64_t EncoderConfig::layer_parameter_count() const {
  const std::int64_t h = hidden, f = ffn;
  return 4 * h * h + 2 * h * f + 9 * h + f;
}

std::int64_t EncoderConfig::embedding_parameter_count() const {
  return (static_cast<std::int64_t>(vocab_size) + 2 + max_len) * hidden;
}

std::vector<std::string> config_differences(const EncoderConfig& a, const EncoderConfig& b) {
  std::vector<std::string> out;
  if (a.layers != b.layers) out.emplace_back("layers");
  if (a.hidden != b.hidden) out.emplace_back("hidden");
  if (a.heads != b.heads) out.emplace_back("heads");
  if (a.ffn != b.ffn) out.emplace_back("ffn");
  if (a.dropout != b.dropout) out.emplace_back("dropout");
  if (a.max_len != b.max_len) out.emplace_back("max_len");
  if (a.vocab_size != b.vocab_size) out.emplace_back("vocab_size");
  if (a.trailing_sep != b.trailing_sep) out.emplace_back("trailing_sep");
  return out;
}

template <typename T>
void init_normal(Parameter<T>& param, std::uint64_t seed, double stddev) {
  Rng rng(derive_seed(seed, param.name));
  for (auto& v : param.value.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void EncoderLayer<T>::for_each(const std::function<void(Parameter<T>&)>& fn) {
  for (auto* p : {&query_w, &query_b, &key_w, &key_b, &value_w, &value_b, &output_w, &output_b, &attn_norm_gain,
                  &attn_norm_bias, &ffn_in_w, &ffn_in_b, &ffn_out_w, &ffn_out_b, &ffn_norm_gain, &ffn_norm_bias}) {
    fn(*p);
  }
}

template <typename T>
Encoder<T> Encoder<T>::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  const std::int64_t h = config.hidden, f = config.ffn;
  Encoder<T> enc;
  enc.config = config;
  enc.embeddings.token = make_param<T>("embeddings.token", {config.vocab_size, h});
  enc.embeddings.segment = make_param<T>("embeddings.segment", {2, h});
  enc.embeddings.position = make_param<T>("embeddings.position", {config.max_len, h});
  init_normal(enc.embeddings.token, seed, kInitStddev);
  init_normal(enc.embeddings.segment, seed, kInitStddev);
  init_normal(enc.embeddings.position, seed, kInitStddev);

  for (std::int32_t i = 0; i < config.layers; ++i) {
    const std::string prefix = "encoder.layer." + std::to_string(i) + ".";
    EncoderLayer<T> layer;
    layer.query_w = make_param<T>(prefix + "attention.query.weight", {h, h});
    layer.query_b = make_param<T>(prefix + "attention.query.bias", {h});
    layer.key_w = make_param<T>(prefix + "attention.key.weight", {h, h});
    layer.key_b = make_param<T>(prefix + "attention.key.bias", {h});
    layer.value_w = make_param<T>(prefix + "attention.value.weight", {h, h});
    layer.value_b = make_param<T>(prefix + "attention.value.bias", {h});
    layer.output_w = make_param<T>(prefix + "attention.output.weight", {h, h});
    layer.output_b = make_param<T>(prefix + "attention.output.bias", {h});
    layer.attn_norm_gain = make_param<T>(prefix + "attention.norm.gain", {h}, T{1});
    layer.attn_norm_bias = make_param<T>(prefix + "attention.norm.bias", {h});
    layer.ffn_in_w = make_param<T>(prefix + "ffn.in.weight", {h, f});
    layer.ffn_in_b = make_param<T>(prefix + "ffn.in.bias", {f});
    layer.ffn_out_w = make_param<T>(prefix + "ffn.out.weight", {f, h});
    layer.ffn_out_b = make_param<T>(prefix + "ffn.out.bias", {h});
    layer.ffn_norm_gain = make_param<T>(prefix + "ffn.norm.gain", {h}, T{1});
    layer.ffn_norm_bias = make_param<T>(prefix + "ffn.norm.bias", {h});
    for (auto* w : {&layer.query_w, &layer.key_w, &layer.value_w, &layer.output_w, &layer.ffn_in_w, &layer.ffn_out_w}) {
      init_normal(*w, seed, kInitStddev);
    }
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

template <typename T>
void Encoder<T>::for_each(const std::function<void(Parameter<T>&)>& fn) {
  fn(embeddings.token);
  fn(embeddings.segment);
  fn(embeddings.position);
  for (auto& layer : layers) layer.for_each(fn);
}

template <typename T>
std::vector<Parameter<T>*> Encoder<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for_each([&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
template <typename U>
Encoder<U> Encoder<T>::cast() const {
  Encoder<U> out;
  out.config = config;
  copy_param(embeddings.token, out.embeddings.token);
  copy_param(embeddings.segment, out.embeddings.segment);
  copy_param(embeddings.position, out.embeddings.position);
  for (EncoderLayer<T> layer : layers) {
    EncoderLayer<U> converted;
    std::vector<Parameter<T>*> src;
    layer.for_each([&](Parameter<T>& p) { src.push_back(&p); });
    std::size_t i = 0;
    converted.for_each([&](Parameter<U>& p) { copy_param(*src[i++], p); });
    out.layers.push_back(std::move(converted));
  }
  return out;
}

template <typename T>
Var<T> embed_input(Tape<T>& tape, const EncodedBatch& batch, EmbeddingTables<T>& tables) {
  const auto tokens = ops::embedding(tape.parameter(tables.token), std::span<const std::int32_t>(batch.token_ids));
  const auto segments = ops::embedding(tape.parameter(tables.segment), std::span<const std::int32_t>(batch.segment_ids));
  const auto positions =
      ops::embedding(tape.parameter(tables.position), std::span<const std::int32_t>(batch.position_ids));
  return ops::add(ops::add(tokens, segments), positions);
}

template <typename T>
Var<T> self_attention(Tape<T>& tape, const Var<T>& input, EncoderLayer<T>& layer, const EncodedBatch& batch,
                      std::int32_t heads) {
  const auto q = dense(tape, input, layer.query_w, layer.query_b);
  const auto k = dense(tape, input, layer.key_w, layer.key_b);
  const auto v = dense(tape, input, layer.value_w, layer.value_b);
  const ops::AttentionLayout layout{batch.batch, batch.seq_len, heads};
  const auto context = ops::attention(q, k, v, layout, std::span<const std::uint8_t>(batch.attention_mask));
  return dense(tape, context, layer.output_w, layer.output_b);
}

template <typename T>
Var<T> encoder_block(Tape<T>& tape, const Var<T>& input, EncoderLayer<T>& layer, const EncodedBatch& batch,
                     const EncoderConfig& config, const ForwardMode& mode) {
  const bool drop = mode.dropout_active();
  Rng dummy;
  Rng& rng = drop ? *mode.rng : dummy;

  auto attn = self_attention(tape, input, layer, batch, config.heads);
  attn = ops::dropout(attn, config.dropout, rng, drop);
  const auto h1 = ops::layer_norm(ops::add(input, attn), tape.parameter(layer.attn_norm_gain),
                                  tape.parameter(layer.attn_norm_bias));

  auto ff = ops::gelu(dense(tape, h1, layer.ffn_in_w, layer.ffn_in_b));
  ff = dense(tape, ff, layer.ffn_out_w, layer.ffn_out_b);
  ff = ops::dropout(ff, config.dropout, rng, drop);
  return ops::layer_norm(ops::add(h1, ff), tape.parameter(layer.ffn_norm_gain), tape.parameter(layer.ffn_norm_bias));
}

template <typename T>
Var<T> encode(Tape<T>& tape, const EncodedBatch& batch, Encoder<T>& encoder, const ForwardMode& mode) {
  const auto& config = encoder.config;
  if (config.layers != static_cast<std::int32_t>(encoder.layers.size())) {
    throw ConfigError("encode: config has " + std::to_string(config.layers) + " layers, weights have " +
                      std::to_string(encoder.layers.size()));
  }
  if (batch.seq_len > config.max_len) {
    throw ContractError("encode: sequence length " + std::to_string(batch.seq_len) + " exceeds max_len " +
                        std::to_string(config.max_len));
  }
  auto hidden = embed_input(tape, batch, encoder.embeddings);
  for (auto& layer : encoder.layers) hidden = encoder_block(tape, hidden, layer, batch, config, mode);
  return hidden;
}

template <typename T>
Var<T> extract_cls(const Var<T>& hidden_states, const EncodedBatch& batch) {
  if (batch.seq_len < 1) throw ContractError("extract_cls: empty sequence");
  std::vector<std::int64_t> rows(static_cast<std::size_t>(batch.batch));
  for (std::int64_t b = 0; b < batch.batch; ++b) rows[static_cast<std::size_t>(b)] = b * batch.seq_len;
  return ops::select_rows(hidden_states, std::span<const std::int64_t>(rows));
}

#define MKDM_INSTANTIATE_ENCODER(T)                                                                             \
  template void init_normal(Parameter<T>&, std::uint64_t, double);                                             \
  template struct EncoderLayer<T>;                                                                             \
  template struct Encoder<T>;                                                                                  \
  template Var<T> embed_input(Tape<T>&, const EncodedBatch&, EmbeddingTables<T>&);                             \
  template Var<T> self_attention(Tape<T>&, const Var<T>&, EncoderLayer<T>&, const EncodedBatch&, std::int32_t); \
  template Var<T> encoder_block(Tape<T>&, const Var<T>&, EncoderLayer<T>&, const EncodedBatch&,                \
                                const EncoderConfig&, const ForwardMode&);                                     \
  template Var<T> encode(Tape<T>&, const EncodedBatch&, Encoder<T>&, const ForwardMode&);                      \
  template Var<T> extract_cls(const Var<T>&, const EncodedBatch&);

MKDM_INSTANTIATE_ENCODER(float)
MKDM_INSTANTIATE_ENCODER(double)

template Encoder<double> Encoder<float>::cast<double>() const;
template Encoder<float> Encoder<double>::cast<float>() const;
template Encoder<float> Encoder<float>::cast<float>() const;

}  // namespace mkdm

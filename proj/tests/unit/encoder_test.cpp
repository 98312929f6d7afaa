#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "mkdm/encoder.hpp"
#include "mkdm/gradcheck.hpp"
#include "mkdm/ops.hpp"
#include "test_support.hpp"

namespace mkdm {
namespace {

using test::random_tensor;

EncodedPair pair_of(std::vector<std::int32_t> q, std::vector<std::int32_t> p, std::int32_t max_len = 16) {
  return assemble_pair(q, p, {max_len, false});
}

Encoder<double> random_encoder(EncoderConfig config, std::uint64_t seed) {
  auto enc = Encoder<double>::init(config, seed);
  // larger than the 0.02 init so every path carries signal
  Rng rng(seed + 99);
  enc.for_each([&](Parameter<double>& p) { p.value = random_tensor(p.value.shape(), rng, 0.5); });
  return enc;
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c = test::tiny_encoder(20);
  EXPECT_NO_THROW(c.validate());
  c.layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test::tiny_encoder(20);
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test::tiny_encoder(20);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EncoderConfig, ParameterCountMatchesAllocation) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    EncoderConfig c;
    c.heads = static_cast<std::int32_t>(rng.uniform_int(1, 4));
    c.hidden = c.heads * static_cast<std::int32_t>(rng.uniform_int(1, 8));
    c.ffn = static_cast<std::int32_t>(rng.uniform_int(1, 40));
    c.layers = static_cast<std::int32_t>(rng.uniform_int(1, 4));
    c.max_len = static_cast<std::int32_t>(rng.uniform_int(4, 40));
    c.vocab_size = static_cast<std::int32_t>(rng.uniform_int(5, 60));
    auto enc = Encoder<float>::init(c, 1);
    std::int64_t allocated = 0;
    enc.for_each([&](Parameter<float>& p) { allocated += static_cast<std::int64_t>(p.value.size()); });
    EXPECT_EQ(allocated, c.parameter_count());
    const std::int64_t h = c.hidden, f = c.ffn;
    EXPECT_EQ(c.layer_parameter_count(), 4 * h * h + 2 * h * f + 9 * h + f);
  }
}

TEST(EncoderInit, PerNameStreamsAreIndependentOfDepth) {
  auto shallow = Encoder<float>::init(test::tiny_encoder(30, 1), 5);
  auto deep = Encoder<float>::init(test::tiny_encoder(30, 3), 5);
  EXPECT_EQ(shallow.embeddings.token.value, deep.embeddings.token.value);
  EXPECT_EQ(shallow.layers[0].query_w.value, deep.layers[0].query_w.value);
  EXPECT_NE(deep.layers[0].query_w.value, deep.layers[1].query_w.value);
}

TEST(SelfAttention, SingleTokenReturnsProjectedValue) {
  auto config = test::tiny_encoder(10);
  auto enc = random_encoder(config, 1);
  auto& layer = enc.layers[0];
  Rng rng(2);
  const auto x = random_tensor({1, 8}, rng);
  EncodedBatch batch;
  batch.batch = 1;
  batch.seq_len = 1;
  batch.attention_mask = {1};
  Tape<double> tape(false);
  const auto out = self_attention(tape, tape.constant(x), layer, batch, config.heads).value();
  auto v = ops::linear(tape.constant(x), tape.parameter(layer.value_w), tape.parameter(layer.value_b));
  const auto expected = ops::linear(v, tape.parameter(layer.output_w), tape.parameter(layer.output_b)).value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
}

TEST(SelfAttention, ZeroQueriesAndKeysAverageUnmaskedValues) {
  auto config = test::tiny_encoder(10);
  auto enc = random_encoder(config, 3);
  auto& layer = enc.layers[0];
  for (auto* p : {&layer.query_w, &layer.query_b, &layer.key_w, &layer.key_b}) p->value.fill(0.0);
  // identity value and output projections expose the attention weights directly
  for (auto* w : {&layer.value_w, &layer.output_w}) {
    w->value.fill(0.0);
    for (std::int64_t i = 0; i < 8; ++i) w->value.at(i, i) = 1.0;
  }
  layer.value_b.value.fill(0.0);
  layer.output_b.value.fill(0.0);
  Rng rng(4);
  const auto x = random_tensor({4, 8}, rng);
  EncodedBatch batch;
  batch.batch = 1;
  batch.seq_len = 4;
  batch.attention_mask = {1, 1, 1, 0};
  Tape<double> tape(false);
  const auto out = self_attention(tape, tape.constant(x), layer, batch, config.heads).value();
  for (std::int64_t c = 0; c < 8; ++c) {
    const double mean = (x.at(0, c) + x.at(1, c) + x.at(2, c)) / 3.0;
    for (std::int64_t r = 0; r < 4; ++r) EXPECT_NEAR(out.at(r, c), mean, 1e-12);
  }
}

TEST(SelfAttention, TwoTokensOneHeadByHand) {
  EncoderConfig config = test::tiny_encoder(10);
  config.hidden = 2;
  config.heads = 1;
  config.ffn = 2;
  auto enc = Encoder<double>::init(config, 1);
  auto& l = enc.layers[0];
  l.query_w.value = TensorD({2, 2}, std::vector<double>{1, 0, 0, 1});
  l.key_w.value = TensorD({2, 2}, std::vector<double>{2, 0, 0, 1});
  l.value_w.value = TensorD({2, 2}, std::vector<double>{1, 1, 0, 1});
  l.output_w.value = TensorD({2, 2}, std::vector<double>{1, 0, 0, 1});
  for (auto* b : {&l.query_b, &l.key_b, &l.value_b, &l.output_b}) b->value.fill(0.0);
  const TensorD x({2, 2}, std::vector<double>{1, 0, 0, 1});
  EncodedBatch batch;
  batch.batch = 1;
  batch.seq_len = 2;
  batch.attention_mask = {1, 1};
  Tape<double> tape(false);
  const auto out = self_attention(tape, tape.constant(x), l, batch, 1).value();

  // q = x, k = [[2,0],[0,1]], v = [[1,1],[0,1]], scale 1/√2
  const double s = 1.0 / std::sqrt(2.0);
  const double scores[2][2] = {{2 * s, 0}, {0, 1 * s}};
  const double v[2][2] = {{1, 1}, {0, 1}};
  for (int r = 0; r < 2; ++r) {
    const double e0 = std::exp(scores[r][0]), e1 = std::exp(scores[r][1]);
    const double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(out.at(r, c), w0 * v[0][c] + w1 * v[1][c], 1e-12);
  }
}

TEST(SelfAttention, AllMaskedSequenceIsRejected) {
  auto config = test::tiny_encoder(10);
  auto enc = random_encoder(config, 1);
  EncodedBatch batch;
  batch.batch = 1;
  batch.seq_len = 2;
  batch.attention_mask = {0, 0};
  Tape<double> tape(false);
  EXPECT_THROW(self_attention(tape, tape.constant(TensorD({2, 8})), enc.layers[0], batch, config.heads), ContractError);
}

TEST(EncoderBlock, ZeroSublayersLeaveDoubleNormalisedResidual) {
  auto config = test::tiny_encoder(10);
  auto enc = Encoder<double>::init(config, 2);
  auto& l = enc.layers[0];
  for (auto* p : {&l.output_w, &l.output_b, &l.ffn_out_w, &l.ffn_out_b}) p->value.fill(0.0);
  Rng rng(6);
  const auto x = random_tensor({3, 8}, rng);
  EncodedBatch batch;
  batch.batch = 1;
  batch.seq_len = 3;
  batch.attention_mask = {1, 1, 1};
  Tape<double> tape(false);
  const auto out = encoder_block(tape, tape.constant(x), l, batch, config, {}).value();
  const auto ones = tape.constant(TensorD({8}, 1.0));
  const auto zeros = tape.constant(TensorD({8}));
  const auto expected = ops::layer_norm(ops::layer_norm(tape.constant(x), ones, zeros), ones, zeros).value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
}

TEST(EncoderBlock, ZeroDropoutTrainingMatchesEval) {
  auto config = test::tiny_encoder(10);
  config.dropout = 0.0;
  auto enc = random_encoder(config, 7);
  const auto batch = EncodedBatch::from_pair(pair_of({4, 5}, {6, 7, 8}));
  Rng rng(1);
  Tape<double> t1(false), t2(false);
  const auto train = encode(t1, batch, enc, ForwardMode{true, &rng}).value();
  const auto eval = encode(t2, batch, enc, ForwardMode{}).value();
  EXPECT_EQ(train, eval);
}

TEST(EncoderBlock, GradientCheck) {
  auto config = test::tiny_encoder(10);
  auto enc = random_encoder(config, 8);
  const auto batch = EncodedBatch::from_pair(pair_of({4, 5}, {6}));
  auto& layer = enc.layers[0];
  std::vector<Parameter<double>*> params;
  layer.for_each([&](Parameter<double>& p) { params.push_back(&p); });
  Rng rng(9);
  Parameter<double> input("input", random_tensor({batch.seq_len, 8}, rng));
  params.push_back(&input);
  const auto weights = random_tensor({batch.seq_len, 8}, rng);
  const auto r = fd_grad_check(
      [&](Tape<double>& tape) {
        auto out = encoder_block(tape, tape.parameter(input), layer, batch, config, {});
        return ops::sum(ops::mul(out, tape.constant(weights)));
      },
      params);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_parameter;
}

TEST(Encode, OneLayerIsOneBlockOverEmbeddings) {
  auto config = test::tiny_encoder(10);
  auto enc = random_encoder(config, 10);
  const auto batch = EncodedBatch::from_pair(pair_of({4, 5}, {6, 7}));
  Tape<double> tape(false);
  const auto full = encode(tape, batch, enc, {}).value();
  const auto manual =
      encoder_block(tape, embed_input(tape, batch, enc.embeddings), enc.layers[0], batch, config, {}).value();
  EXPECT_EQ(full, manual);
}

TEST(Encode, RejectsLayerCountMismatch) {
  auto enc = Encoder<double>::init(test::tiny_encoder(10, 2), 1);
  enc.layers.pop_back();
  const auto batch = EncodedBatch::from_pair(pair_of({4}, {5}));
  Tape<double> tape(false);
  EXPECT_THROW(encode(tape, batch, enc, {}), ConfigError);
}

TEST(Encode, RejectsSequenceLongerThanPositionTable) {
  auto enc = Encoder<double>::init(test::tiny_encoder(10), 1);
  const auto batch = EncodedBatch::from_pair(pair_of({4, 4, 4, 4, 4}, {5, 5, 5, 5, 5}, 12));
  enc.config.max_len = 8;
  Tape<double> tape(false);
  EXPECT_THROW(encode(tape, batch, enc, {}), ContractError);
}

TEST(Encode, PaddingDoesNotChangeRealPositions) {
  auto config = test::tiny_encoder(10, 2);
  auto enc = random_encoder(config, 11);
  const auto pair = pair_of({4, 5}, {6});
  Tape<double> t1(false), t2(false);
  const auto cropped = encode(t1, EncodedBatch::from_pair(pair), enc, {}).value();
  const auto padded = encode(t2, EncodedBatch::padded(pair), enc, {}).value();
  for (std::int64_t r = 0; r < cropped.rows(); ++r) {
    for (std::int64_t c = 0; c < 8; ++c) EXPECT_NEAR(cropped.at(r, c), padded.at(r, c), 1e-5);
  }
}

TEST(Encode, PaddedTokenIdsNeverLeak) {
  auto config = test::tiny_encoder(10, 2);
  auto enc = random_encoder(config, 12);
  auto pair = pair_of({4, 5}, {6});
  auto batch = EncodedBatch::padded(pair);
  Tape<double> t1(false);
  const auto before = encode(t1, batch, enc, {}).value();
  const auto real = pair.unpadded_length();
  for (std::int64_t t = real; t < batch.seq_len; ++t) batch.token_ids[static_cast<std::size_t>(t)] = 9;
  Tape<double> t2(false);
  const auto after = encode(t2, batch, enc, {}).value();
  for (std::int64_t r = 0; r < real; ++r) {
    for (std::int64_t c = 0; c < 8; ++c) EXPECT_EQ(before.at(r, c), after.at(r, c));
  }
}

TEST(Encode, FullGradientCheckAtTinySize) {
  EncoderConfig config = test::tiny_encoder(10, 2);
  config.max_len = 4;
  auto enc = random_encoder(config, 13);
  const auto batch = EncodedBatch::from_pair(pair_of({4}, {5}, 4));
  ASSERT_EQ(batch.seq_len, 4);
  auto params = enc.parameters();
  Rng rng(14);
  const auto weights = random_tensor({4, 8}, rng);
  const auto r = fd_grad_check(
      [&](Tape<double>& tape) {
        return ops::sum(ops::mul(encode(tape, batch, enc, {}), tape.constant(weights)));
      },
      params);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_parameter;
}

TEST(ExtractCls, ReturnsRowZeroOfEachSequence) {
  Rng rng(15);
  const auto h = random_tensor({6, 3}, rng);
  EncodedBatch batch;
  batch.batch = 2;
  batch.seq_len = 3;
  Tape<double> tape(false);
  const auto cls = extract_cls(tape.constant(h), batch).value();
  ASSERT_EQ(cls.shape(), (Shape{2, 3}));
  for (std::int64_t c = 0; c < 3; ++c) {
    EXPECT_EQ(cls.at(0, c), h.at(0, c));
    EXPECT_EQ(cls.at(1, c), h.at(3, c));
  }
}

TEST(ExtractCls, IgnoresOrderOfLaterRows) {
  Rng rng(16);
  auto h = random_tensor({4, 3}, rng);
  EncodedBatch batch;
  batch.batch = 1;
  batch.seq_len = 4;
  Tape<double> tape(false);
  const auto a = extract_cls(tape.constant(h), batch).value();
  for (std::int64_t c = 0; c < 3; ++c) std::swap(h.at(1, c), h.at(3, c));
  const auto b = extract_cls(tape.constant(h), batch).value();
  EXPECT_EQ(a, b);
}

TEST(ExtractCls, MatchesRowZeroOfTheFullForward) {
  auto config = test::tiny_encoder(10, 2);
  auto enc = random_encoder(config, 17);
  const auto batch = EncodedBatch::from_pair(pair_of({4, 5}, {6}));
  Tape<double> tape(false);
  const auto hs = encode(tape, batch, enc, {});
  const auto cls = extract_cls(hs, batch).value();
  for (std::int64_t c = 0; c < 8; ++c) EXPECT_EQ(cls.at(0, c), hs.value().at(0, c));
}

TEST(Encode, ForwardTimeGrowsWithDepth) {
  const auto batch = EncodedBatch::from_pair(pair_of({4, 5, 6}, {7, 8, 9, 4, 5}));
  double previous = 0.0;
  for (std::int32_t layers : {1, 3, 5}) {
    auto enc = Encoder<float>::init(test::tiny_encoder(10, layers), 1);
    double best = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      for (int call = 0; call < 1000; ++call) {
        Tape<float> tape(false);
        encode(tape, batch, enc, {});
      }
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    EXPECT_GT(best, previous) << layers << " layers";
    previous = best;
  }
}

}  // namespace
}  // namespace mkdm

// Microbenchmarks for the hot paths: matmul, the encoder forward pass as a
// function of depth, and batch-1 student/teacher scoring.

#include <benchmark/benchmark.h>

#include "mkdm/data.hpp"
#include "mkdm/model.hpp"
#include "mkdm/ops.hpp"
#include "mkdm/text.hpp"

namespace mkdm {
namespace {

EncoderConfig dims(std::int32_t layers) {
  EncoderConfig c;
  c.layers = layers;
  c.hidden = 32;
  c.heads = 2;
  c.ffn = 64;
  c.max_len = 48;
  c.dropout = 0.0;
  c.vocab_size = 400;
  return c;
}

struct Corpus {
  Vocabulary vocab;
  std::vector<EncodedPair> pairs;
  Corpus() {
    SyntheticSpec spec;
    spec.vocab_size = 200;
    spec.topics = 8;
    spec.passage_min = 8;
    spec.passage_max = 16;
    spec.size = 256;
    const auto data = generate_synthetic(spec);
    vocab = build_vocab(data.texts(), 400);
    pairs = encode_dataset(data, vocab, dims(1).pair_options());
  }
};

const Corpus& corpus() {
  static const Corpus c;
  return c;
}

Tensor filled(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, 1.0));
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  const auto a = filled({n, n}, rng), b = filled({n, n}, rng);
  for (auto _ : state) {
    Tape<float> tape(false);
    benchmark::DoNotOptimize(ops::matmul(tape.constant(a), tape.constant(b)).value());
  }
  state.counters["flop/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_EncoderForward(benchmark::State& state) {
  auto model = StudentModel<float>::init(dims(static_cast<std::int32_t>(state.range(0))), {"t"}, 1);
  const auto& pairs = corpus().pairs;
  std::vector<const EncodedPair*> ptrs;
  for (std::size_t i = 0; i < 16; ++i) ptrs.push_back(&pairs[i]);
  const auto batch = EncodedBatch::from_pairs(ptrs);
  for (auto _ : state) {
    Tape<float> tape(false);
    benchmark::DoNotOptimize(student_forward(tape, batch, model, {}).golden.value());
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_EncoderForward)->DenseRange(1, 9, 2);

void BM_StudentScoreOne(benchmark::State& state) {
  auto model = StudentModel<float>::init(dims(3), {"t1", "t2", "t3"}, 1);
  const auto& pairs = corpus().pairs;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict(model, std::span(&pairs[i], 1), {}, 1));
    i = (i + 1) % pairs.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StudentScoreOne);

void BM_TeacherScoreOne(benchmark::State& state) {
  auto model = TeacherModel<float>::init("t", dims(6), 1);
  const auto& pairs = corpus().pairs;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict_scores(model, std::span(&pairs[i], 1), 1));
    i = (i + 1) % pairs.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TeacherScoreOne);

}  // namespace
}  // namespace mkdm

BENCHMARK_MAIN();

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mkdm/bench.hpp"
#include "mkdm/metrics.hpp"
#include "test_support.hpp"

namespace mkdm {
namespace {

using Scores = std::vector<double>;
using Labels = std::vector<std::int32_t>;

/// Straight from the definition: every positive/negative pair, ties count half.
double pairwise_auc(const Scores& s, const Labels& l) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return 100.0 * wins / static_cast<double>(pairs);
}

TEST(Accuracy, Examples) {
  EXPECT_DOUBLE_EQ(accuracy(Scores{0.6, 0.4}, Labels{1, 0}), 100.0);
  EXPECT_DOUBLE_EQ(accuracy(Scores{0.4, 0.6}, Labels{1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(accuracy(Scores{0.5}, Labels{1}), 100.0);
  EXPECT_DOUBLE_EQ(accuracy(Scores{0.1, 0.9, 0.8}, Labels{0, 0, 1}), 100.0 * 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(accuracy(Scores{0.3, 0.7}, Labels{1, 1}, 0.2), 100.0);
}

TEST(Accuracy, Errors) {
  EXPECT_THROW(accuracy(Scores{}, Labels{}), MetricError);
  EXPECT_THROW(accuracy(Scores{0.1, 0.2}, Labels{1}), MetricError);
  EXPECT_THROW(accuracy(Scores{0.1}, Labels{3}), MetricError);
}

TEST(Accuracy, LabelFlipSymmetry) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 40));
    Scores s(n), flipped(n);
    Labels l(n), lf(n);
    for (std::size_t i = 0; i < n; ++i) {
      // keep scores off the threshold so the flip is tie-free
      do s[i] = rng.uniform();
      while (s[i] == 0.5);
      l[i] = rng.bernoulli(0.5) ? 1 : 0;
      flipped[i] = 1.0 - s[i];
      lf[i] = 1 - l[i];
    }
    EXPECT_DOUBLE_EQ(accuracy(flipped, lf), accuracy(s, l));
  }
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc(Scores{0.9, 0.8, 0.1}, Labels{1, 1, 0}), 100.0);
  EXPECT_DOUBLE_EQ(auc(Scores{0.5, 0.5}, Labels{1, 0}), 50.0);
  EXPECT_DOUBLE_EQ(auc(Scores{0.2, 0.7, 0.4, 0.9}, Labels{0, 1, 1, 0}), 50.0);
  EXPECT_DOUBLE_EQ(auc(Scores{0.1, 0.9}, Labels{1, 0}), 0.0);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc(Scores{0.1, 0.2}, Labels{1, 1}), MetricError);
  EXPECT_THROW(auc(Scores{0.1, 0.2}, Labels{0, 0}), MetricError);
  EXPECT_THROW(auc(Scores{0.1}, Labels{0, 1}), MetricError);
}

TEST(Auc, RankSumMatchesPairwiseDefinition) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 30));
    Scores s(n);
    Labels l(n);
    // coarse grid so ties are common
    for (auto& x : s) x = static_cast<double>(rng.uniform_int(0, 6)) / 6.0;
    for (auto& y : l) y = rng.bernoulli(0.5) ? 1 : 0;
    l[0] = 1;
    l[1] = 0;
    EXPECT_EQ(auc(s, l), pairwise_auc(s, l)) << "trial " << trial;
  }
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 50));
    Scores s(n), t(n);
    Labels l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_int(0, 10)) / 10.0;
      t[i] = std::exp(3.0 * s[i]) + 7.0;
      l[i] = i % 2 == 0 ? 1 : 0;
    }
    EXPECT_EQ(auc(s, l), auc(t, l));
  }
}

TEST(Evaluate, ReportFields) {
  const auto r = evaluate(Scores{0.9, 0.2, 0.6, 0.4}, Labels{1, 0, 0, 1});
  EXPECT_DOUBLE_EQ(r.acc, 50.0);
  EXPECT_DOUBLE_EQ(r.auc, 75.0);
  EXPECT_EQ(r.n_examples, 4);
  const auto j = r.to_json();
  EXPECT_EQ(j.at("n_examples"), 4);
  EXPECT_FALSE(j.contains("qps"));
}

TEST(ResultRows, CsvFormat) {
  test::TempDir dir;
  const auto path = dir / "results.csv";
  append_result_row(path, {"run-1", 3, 0.9, "mkdm", 81.234, 88.5, 210.04});
  append_result_row(path, {"run-2", 1, 0.0, "gold_only", 70.0, 75.0, std::nullopt});
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_EQ(text.str(),
            "run_id,layers,alpha,mode,acc,auc,qps\n"
            "run-1,3,0.9,mkdm,81.23,88.50,210.0\n"
            "run-2,1,0,gold_only,70.00,75.00,\n");
  EXPECT_THROW(format_result_row({"a,b", 1, 0.0, "m", 0, 0, {}}), ContractError);
}

TEST(History, JsonLinesWithAndWithoutTiming) {
  EpochRecord r;
  r.epoch = 2;
  r.train_loss = 0.5;
  r.val_auc = 80.0;
  r.wall_seconds = 1.25;
  const std::vector<EpochRecord> h = {r};
  const auto timed = nlohmann::json::parse(history_jsonl(h));
  EXPECT_EQ(timed.at("wall_seconds"), 1.25);
  EXPECT_TRUE(timed.at("val_acc").is_null());
  const auto plain = history_jsonl(h, false);
  EXPECT_EQ(plain.find("wall_seconds"), std::string::npos);
  EXPECT_EQ(plain.back(), '\n');
}

TEST(QpsBenchmark, CyclesBatchesAndReportsRepetitions) {
  std::size_t calls = 0, items = 0;
  QpsOptions options;
  options.batch_size = 3;
  options.warmup_batches = 2;
  options.min_duration_seconds = 0.01;
  options.repetitions = 4;
  const auto r = qps_benchmark(
      [&](std::size_t first, std::size_t count) {
        EXPECT_LT(first, 7u);
        EXPECT_LE(first + count, 7u);
        ++calls;
        items += count;
      },
      7, options);
  EXPECT_EQ(r.repetitions.size(), 4u);
  EXPECT_GT(r.mean, 0.0);
  EXPECT_GE(r.stddev, 0.0);
  EXPECT_GT(calls, 2u);
  EXPECT_THROW(qps_benchmark([](std::size_t, std::size_t) {}, 0, options), MetricError);
}

class ModelQps : public ::testing::Test {
 protected:
  static EncoderConfig dims(std::int32_t layers) {
    EncoderConfig c;
    c.layers = layers;
    c.hidden = 32;
    c.heads = 2;
    c.ffn = 64;
    c.max_len = 32;
    c.dropout = 0.0;
    c.vocab_size = 150;
    return c;
  }

  void SetUp() override {
    const auto data = generate_synthetic(test::small_spec(64, 2));
    vocab = build_vocab(data.texts(), 150);
    pairs = encode_dataset(data, vocab, dims(1).pair_options());
    options.warmup_batches = 20;
    options.min_duration_seconds = 0.25;
    options.repetitions = 3;
  }

  double student_qps(std::int32_t layers) {
    auto model = StudentModel<float>::init(dims(layers), {"t1", "t2", "t3"}, 1);
    return benchmark_student(model, pairs, options).mean;
  }

  Vocabulary vocab;
  std::vector<EncodedPair> pairs;
  QpsOptions options;
};

TEST_F(ModelQps, RepeatableWithinFifteenPercent) {
  auto model = StudentModel<float>::init(dims(3), {"t1"}, 1);
  // quarter-second measurements swing by a fifth on a shared core
  options.min_duration_seconds = 1.0;
  options.repetitions = 5;
  const double a = benchmark_student(model, pairs, options).mean;
  const double b = benchmark_student(model, pairs, options).mean;
  EXPECT_LT(std::abs(a - b) / std::max(a, b), 0.15) << a << " vs " << b;
}

TEST_F(ModelQps, NonIncreasingInDepth) {
  double previous = 0.0;
  for (std::int32_t layers : {1, 3, 5, 7, 9}) {
    const double q = student_qps(layers);
    if (previous > 0.0) {
      EXPECT_LE(q, previous) << layers << " layers";
    }
    previous = q;
  }
}

TEST_F(ModelQps, StudentOutrunsDeeperTeacher) {
  const double student = student_qps(3);
  auto teacher = TeacherModel<float>::init("t", dims(6), 1);
  const double teacher_qps = benchmark_teacher(teacher, pairs, options).mean;
  EXPECT_GE(student / teacher_qps, 1.5) << student << " vs " << teacher_qps;
}

}  // namespace
}  // namespace mkdm

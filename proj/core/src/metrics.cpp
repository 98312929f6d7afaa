#include "mkdm/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mkdm/error.hpp"

namespace mkdm {
namespace {

void check_inputs(std::span<const double> scores, std::span<const std::int32_t> labels, const char* what) {
  if (scores.size() != labels.size()) {
    throw MetricError(std::string(what) + ": " + std::to_string(scores.size()) + " scores for " +
                      std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw MetricError(std::string(what) + ": no examples");
  for (auto l : labels) {
    if (l != 0 && l != 1) throw MetricError(std::string(what) + ": labels must be 0 or 1");
  }
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string format_number(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const std::int32_t> labels, double threshold) {
  check_inputs(scores, labels, "accuracy");
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::int32_t predicted = scores[i] >= threshold ? 1 : 0;
    correct += predicted == labels[i];
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(scores.size());
}

double auc(std::span<const double> scores, std::span<const std::int32_t> labels) {
  check_inputs(scores, labels, "auc");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  const auto negatives = static_cast<std::int64_t>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) throw MetricError("auc: undefined without both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 2×rank over positives; tied groups share twice their average rank (an integer).
  std::int64_t twice_rank_sum = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const auto twice_avg = static_cast<std::int64_t>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (labels[order[i]] == 1) twice_rank_sum += twice_avg;
    }
    start = end;
  }
  // Mann–Whitney: U = R⁺ − P(P+1)/2, counted in halves to stay exact.
  const std::int64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return 100.0 * static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

nlohmann::json QpsResult::to_json() const {
  return {{"mean", mean},
          {"stddev", stddev},
          {"repetitions", repetitions},
          {"batch_size", options.batch_size},
          {"warmup_batches", options.warmup_batches},
          {"min_duration_seconds", options.min_duration_seconds}};
}

QpsResult qps_benchmark(const std::function<void(std::size_t, std::size_t)>& run, std::size_t n_items,
                        const QpsOptions& options) {
  if (n_items == 0) throw MetricError("qps: no examples");
  if (options.batch_size < 1 || options.repetitions < 1) throw ConfigError("qps: batch size and repetitions must be >= 1");
  using Clock = std::chrono::steady_clock;
  const auto batch = static_cast<std::size_t>(options.batch_size);
  std::size_t cursor = 0;
  auto next_batch = [&] {
    if (cursor >= n_items) cursor = 0;
    const std::size_t count = std::min(batch, n_items - cursor);
    run(cursor, count);
    cursor += count;
    return count;
  };
  for (std::int64_t i = 0; i < options.warmup_batches; ++i) next_batch();

  QpsResult result;
  result.options = options;
  for (std::int32_t r = 0; r < options.repetitions; ++r) {
    std::size_t done = 0;
    const auto start = Clock::now();
    double elapsed = 0.0;
    while (elapsed < options.min_duration_seconds || done == 0) {
      done += next_batch();
      elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    }
    result.repetitions.push_back(static_cast<double>(done) / elapsed);
  }
  const double n = static_cast<double>(result.repetitions.size());
  result.mean = std::accumulate(result.repetitions.begin(), result.repetitions.end(), 0.0) / n;
  double var = 0.0;
  for (double q : result.repetitions) var += (q - result.mean) * (q - result.mean);
  result.stddev = result.repetitions.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return result;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"acc", acc}, {"auc", auc}, {"n_examples", n_examples}, {"threshold", threshold}};
  if (qps) j["qps"] = qps->to_json();
  return j;
}

EvalReport evaluate(std::span<const double> scores, std::span<const std::int32_t> labels, double threshold) {
  EvalReport r;
  r.acc = accuracy(scores, labels, threshold);
  r.auc = auc(scores, labels);
  r.n_examples = static_cast<std::int64_t>(scores.size());
  r.threshold = threshold;
  return r;
}

std::string format_result_row(const ResultRow& row) {
  if (row.run_id.find_first_of(",\n") != std::string::npos || row.mode.find_first_of(",\n") != std::string::npos) {
    throw ContractError("result row fields must not contain commas or newlines");
  }
  return row.run_id + ',' + std::to_string(row.layers) + ',' + format_number(row.alpha, "%g") + ',' + row.mode + ',' +
         format_number(row.acc, "%.2f") + ',' + format_number(row.auc, "%.2f") + ',' +
         (row.qps ? format_number(*row.qps, "%.1f") : std::string());
}

void append_result_row(const std::filesystem::path& path, const ResultRow& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw DataError(DataError::Kind::io, "cannot append to " + path.string());
  if (fresh) out << kResultsHeader << '\n';
  out << format_result_row(row) << '\n';
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"golden_loss", golden_loss},
          {"soft_loss", soft_loss},
          {"val_acc", optional_json(val_acc)},
          {"val_auc", optional_json(val_auc)},
          {"val_soft_mse", optional_json(val_soft_mse)},
          {"wall_seconds", wall_seconds}};
}

std::string history_jsonl(std::span<const EpochRecord> history, bool include_timing) {
  std::string out;
  for (const auto& r : history) {
    auto j = r.to_json();
    if (!include_timing) j.erase("wall_seconds");
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace mkdm

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mkdm {

/// 100 × fraction of examples whose prediction (score ≥ threshold) matches the label.
double accuracy(std::span<const double> scores, std::span<const std::int32_t> labels, double threshold = 0.5);

/// 100 × P(score of a random positive > score of a random negative), ties
/// counting one half. Computed from average ranks in O(n log n). Throws
/// MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::int32_t> labels);

struct QpsOptions {
  std::int64_t batch_size = 1;
  std::int64_t warmup_batches = 20;
  double min_duration_seconds = 1.0;
  std::int32_t repetitions = 3;
};

struct QpsResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> repetitions;  // examples per second
  QpsOptions options;

  nlohmann::json to_json() const;
};

/// Calls `run(first, count)` on consecutive batches, cycling over `n_items`,
/// for at least min_duration_seconds per repetition after a warm-up.
QpsResult qps_benchmark(const std::function<void(std::size_t first, std::size_t count)>& run, std::size_t n_items,
                        const QpsOptions& options);

struct EvalReport {
  double acc = 0.0;
  double auc = 0.0;
  std::int64_t n_examples = 0;
  double threshold = 0.5;
  std::optional<QpsResult> qps;

  nlohmann::json to_json() const;
};

EvalReport evaluate(std::span<const double> scores, std::span<const std::int32_t> labels, double threshold = 0.5);

/// One line of the results CSV `run_id,layers,alpha,mode,acc,auc,qps`.
struct ResultRow {
  std::string run_id;
  std::int32_t layers = 0;
  double alpha = 0.0;
  std::string mode;
  double acc = 0.0;
  double auc = 0.0;
  std::optional<double> qps;
};

inline constexpr const char* kResultsHeader = "run_id,layers,alpha,mode,acc,auc,qps";

std::string format_result_row(const ResultRow& row);
/// Creates the file with its header when absent.
void append_result_row(const std::filesystem::path& path, const ResultRow& row);

/// One training epoch's summary.
struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double golden_loss = 0.0;  // mean l_g over the epoch's batches
  double soft_loss = 0.0;    // mean of (1/n)Σ l_si over the epoch's batches
  std::optional<double> val_acc;
  std::optional<double> val_auc;
  std::optional<double> val_soft_mse;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// One JSON object per line. Without timing the text depends only on the run's inputs.
std::string history_jsonl(std::span<const EpochRecord> history, bool include_timing = true);

}  // namespace mkdm

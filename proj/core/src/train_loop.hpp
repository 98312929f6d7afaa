#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mkdm/data.hpp"
#include "mkdm/error.hpp"
#include "mkdm/metrics.hpp"

namespace mkdm::detail {

struct StepLoss {
  double total = 0.0;
  double golden = 0.0;
  double soft = 0.0;
};

/// Algorithm skeleton shared by teacher and student training: for each epoch,
/// shuffle with (seed, epoch), run `step` on every batch, then let `validate`
/// fill the epoch's validation fields.
template <typename Step, typename Validate>
std::vector<EpochRecord> run_epochs(std::size_t n, std::int64_t batch_size, std::uint64_t seed, std::int64_t epochs,
                                    Step&& step, Validate&& validate, std::vector<StepLoss>* steps) {
  std::vector<EpochRecord> history;
  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    const auto batches = batch_iter(n, static_cast<std::size_t>(batch_size), seed, epoch, true);
    for (const auto& batch : batches) {
      const StepLoss loss = step(std::span<const std::size_t>(batch));
      if (!std::isfinite(loss.total)) {
        throw TrainingError("loss became non-finite in epoch " + std::to_string(epoch));
      }
      record.train_loss += loss.total;
      record.golden_loss += loss.golden;
      record.soft_loss += loss.soft;
      if (steps) steps->push_back(loss);
    }
    const auto count = static_cast<double>(batches.size());
    record.train_loss /= count;
    record.golden_loss /= count;
    record.soft_loss /= count;
    validate(record);
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(record);
  }
  return history;
}

/// Stacks the selected pairs into one cropped batch.
inline EncodedBatch gather_batch(std::span<const EncodedPair> pairs, std::span<const std::size_t> rows) {
  std::vector<const EncodedPair*> ptrs;
  ptrs.reserve(rows.size());
  for (auto r : rows) ptrs.push_back(&pairs[r]);
  return EncodedBatch::from_pairs(ptrs);
}

}  // namespace mkdm::detail

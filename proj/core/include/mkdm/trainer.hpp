#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mkdm/data.hpp"
#include "mkdm/metrics.hpp"
#include "mkdm/model.hpp"
#include "mkdm/optim.hpp"
#include "mkdm/soft_labels.hpp"

namespace mkdm {

enum class TrainMode {
  mkdm,                // golden + every selected teacher head
  single_student,      // golden + exactly one teacher head
  gold_only,           // golden head only, no cache needed
  soft_only_pretrain,  // teacher heads only; the golden head is never touched
};

std::string to_string(TrainMode mode);
/// Accepts the enum names plus the CLI spellings "single" and "gold-only".
TrainMode parse_train_mode(const std::string& name);

/// Which heads feed the aggregated prediction.
enum class AggregationMode {
  automatic,    // golden head iff α < 1, teacher heads iff α > 0
  all_heads,    // golden + every teacher head
  soft_only,    // teacher heads only
  golden_only,  // golden head only
};

std::string to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(const std::string& name);

struct InitSpec {
  enum class Kind { random, checkpoint } kind = Kind::random;
  std::filesystem::path path;
  LayerMap layer_map;  // empty: source layer i → student layer i for every student layer
  bool copy_embeddings = true;
};

struct TrainConfig {
  double alpha = 0.9;
  /// Unset: 1e-3 from random initialisation, 3e-4 from a checkpoint.
  std::optional<double> lr;
  std::int64_t batch_size = 32;
  std::int64_t epochs = 5;
  std::uint64_t seed = 1;
  EncoderConfig student;
  TrainMode mode = TrainMode::mkdm;
  InitSpec init;
  OptimizerKind optimizer = OptimizerKind::adam;
  bool freeze_embeddings = false;
  bool head_bias = true;
  /// Cache columns to distil from; empty selects all of them.
  std::vector<std::string> teachers;
  AggregationMode aggregation = AggregationMode::automatic;
  std::int64_t eval_batch_size = 64;

  double learning_rate() const;
  void validate() const;

  nlohmann::json to_json() const;
  /// Fields absent from `j` keep their defaults; unknown fields are rejected.
  static TrainConfig from_json(const nlohmann::json& j);

  /// Batch 256 and learning rate 3e-5 over BERT-base dimensions.
  static TrainConfig bert_base_profile(std::int32_t vocab_size);
};

AggregationPolicy aggregation_policy(const TrainConfig& config, std::int32_t n_teachers);

struct TrainResult {
  StudentModel<float> model;
  std::vector<EpochRecord> history;
  /// Per optimiser step: the loss that was differentiated and its two components.
  std::vector<double> step_losses;
  std::vector<double> step_golden;
  std::vector<double> step_soft;
  std::optional<InitReport> init_report;
};

/// Training loop for modes mkdm, single_student and gold_only: per batch,
/// forward, (1 − α)·l_g + α·mean(l_s), backward, optimiser step. The cache is
/// joined to `train` by id before the first step. `val` may be empty.
TrainResult train_mkdm(const Dataset& train, const SoftLabelCache* cache, const Dataset& val, const Vocabulary& vocab,
                       const TrainConfig& config);

/// Stage 1 of the two-stage regime: loss = mean soft loss over `unlabeled`,
/// which needs no gold labels. `val` (with its own cache) may be empty; when
/// labeled it also yields acc/auc of the teacher-head aggregate.
TrainResult pretrain_soft_only(const Dataset& unlabeled, const SoftLabelCache& cache, const Dataset& val,
                               const SoftLabelCache* val_cache, const Vocabulary& vocab, const TrainConfig& config);

/// Stage 2: train_mkdm starting from every tensor of a stage-1 checkpoint.
/// Throws ConfigError listing fields when the encoder configs differ.
TrainResult finetune_stage2(const Dataset& train, const SoftLabelCache* cache, const Dataset& val,
                            const Vocabulary& vocab, const TrainConfig& config, const Checkpoint& stage1);

/// Shared loop; `model` supplies the starting weights.
TrainResult train_from(StudentModel<float> model, const Dataset& train, const SoftLabelCache* cache,
                       const Dataset& val, const SoftLabelCache* val_cache, const Vocabulary& vocab,
                       const TrainConfig& config);

/// Acc/auc of the aggregated prediction on a labeled set.
EvalReport evaluate_student(StudentModel<float>& model, const Dataset& data, const Vocabulary& vocab,
                            const AggregationPolicy& policy, std::int64_t batch_size = 64);

}  // namespace mkdm

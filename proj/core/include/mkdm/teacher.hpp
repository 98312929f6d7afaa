#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mkdm/data.hpp"
#include "mkdm/metrics.hpp"
#include "mkdm/model.hpp"
#include "mkdm/optim.hpp"
#include "mkdm/soft_labels.hpp"

namespace mkdm {

struct TeacherConfig {
  std::string id;
  EncoderConfig encoder;  // dropout here is overridden by `dropout`
  std::uint64_t seed = 1;
  double lr = 1e-3;
  double dropout = 0.1;
  std::int64_t epochs = 5;
  std::int64_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adam;

  void validate() const;
  nlohmann::json to_json() const;
  /// Fields absent from `j` keep the values in `defaults`.
  static TeacherConfig from_json(const nlohmann::json& j, const TeacherConfig& defaults);
  static TeacherConfig from_json(const nlohmann::json& j) { return from_json(j, TeacherConfig{}); }
};

/// Three teachers over `encoder` differing in seed, dropout (0.0, 0.1, 0.2) and learning rate.
std::vector<TeacherConfig> default_zoo(const EncoderConfig& encoder, std::uint64_t seed = 1, std::int64_t epochs = 5);

/// `{"teachers": [...]}`; throws ConfigError on duplicate ids.
std::vector<TeacherConfig> zoo_from_json(const nlohmann::json& j, const EncoderConfig& base);
nlohmann::json zoo_to_json(std::span<const TeacherConfig> zoo);

struct TeacherResult {
  TeacherModel<float> model;
  std::vector<EpochRecord> history;
  EvalReport train_report;
  std::optional<EvalReport> val_report;
};

/// Minimises sigmoid cross-entropy on gold labels. `val` may be empty.
TeacherResult train_teacher(const Dataset& train, const Dataset& val, const Vocabulary& vocab,
                            const TeacherConfig& config);

/// Eval-mode scores in [0, 1], row-aligned with `dataset`. Throws DataError
/// when `vocab` is not the one the teacher was trained with.
std::vector<double> predict_soft_labels(TeacherModel<float>& model, const Dataset& dataset, const Vocabulary& vocab);

/// One column per teacher, in the given order.
SoftLabelCache build_cache(std::span<TeacherModel<float>* const> teachers, const Dataset& dataset,
                           const Vocabulary& vocab);

}  // namespace mkdm

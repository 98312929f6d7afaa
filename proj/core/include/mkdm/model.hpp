#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mkdm/checkpoint.hpp"
#include "mkdm/encoder.hpp"
#include "mkdm/heads.hpp"

namespace mkdm {

/// Shared encoder plus the multi-task heads.
template <typename T>
struct StudentModel {
  Encoder<T> encoder;
  StudentHeads<T> heads;
  /// Teacher id behind each soft head, in head order.
  std::vector<std::string> teacher_ids;
  std::string vocab_fingerprint;

  static StudentModel init(const EncoderConfig& config, std::vector<std::string> teacher_ids, std::uint64_t seed,
                           bool head_bias = true);

  const EncoderConfig& config() const { return encoder.config; }
  std::int32_t n_teachers() const { return heads.n_teachers(); }
  std::int64_t parameter_count();

  void for_each(const std::function<void(Parameter<T>&)>& fn) {
    encoder.for_each(fn);
    heads.for_each(fn);
  }
  std::vector<Parameter<T>*> parameters();

  template <typename U>
  StudentModel<U> cast() const;
};

/// Encoder with a single sigmoid relevance head.
template <typename T>
struct TeacherModel {
  std::string id;
  Encoder<T> encoder;
  Parameter<T> head_weight;  // [h × 1]
  Parameter<T> head_bias;    // [1]
  std::string vocab_fingerprint;

  static TeacherModel init(std::string id, const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return encoder.config; }
  void for_each(const std::function<void(Parameter<T>&)>& fn) {
    encoder.for_each(fn);
    fn(head_weight);
    fn(head_bias);
  }
  std::vector<Parameter<T>*> parameters();
};

template <typename T>
struct StudentOutputs {
  Var<T> golden;             // [batch × 2], invalid when not requested
  std::vector<Var<T>> soft;  // n × [batch × 1]
};

/// Forward pass through encoder and heads.
template <typename T>
StudentOutputs<T> student_forward(Tape<T>& tape, const EncodedBatch& batch, StudentModel<T>& model,
                                  const ForwardMode& mode, bool with_golden = true, bool with_soft = true);

/// Relevance logits of the teacher head → [batch × 1].
template <typename T>
Var<T> teacher_logits(Tape<T>& tape, const EncodedBatch& batch, TeacherModel<T>& model, const ForwardMode& mode);

/// Eval-mode head outputs for every pair, batched `batch_size` at a time.
std::vector<PredictionBundle> predict(StudentModel<float>& model, std::span<const EncodedPair> pairs,
                                      const AggregationPolicy& policy, std::int64_t batch_size = 64);

/// Eval-mode teacher scores sigmoid(logit) for every pair.
std::vector<double> predict_scores(TeacherModel<float>& model, std::span<const EncodedPair> pairs,
                                   std::int64_t batch_size = 64);

nlohmann::json encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

Checkpoint to_checkpoint(StudentModel<float>& model, const nlohmann::json& extra = {});
/// Throws CheckpointError when the file holds a teacher or its tensors do not fit.
StudentModel<float> student_from_checkpoint(const Checkpoint& ckpt);

Checkpoint to_checkpoint(TeacherModel<float>& model, const nlohmann::json& extra = {});
TeacherModel<float> teacher_from_checkpoint(const Checkpoint& ckpt);

/// "student" or "teacher", from the config echo.
std::string checkpoint_kind(const Checkpoint& ckpt);
EncoderConfig checkpoint_encoder_config(const Checkpoint& ckpt);

/// Which source layer fills each student layer: pairs (source, destination).
using LayerMap = std::vector<std::pair<std::int32_t, std::int32_t>>;

/// Source layer i → student layer i for every student layer.
LayerMap bottom_layers(std::int32_t student_layers);

struct InitReport {
  std::vector<std::string> mapped;
  std::vector<std::string> unmapped;
};

/// Copies the embedding tables (optionally) and the mapped encoder layers of
/// `source` into `student`. Everything else keeps its current values. Throws
/// CheckpointError naming the tensor on any shape mismatch or missing tensor.
InitReport init_from_checkpoint(StudentModel<float>& student, const Checkpoint& source, const LayerMap& layer_map,
                                bool copy_embeddings = true);

/// Parameter name of `field` in encoder layer `layer`, e.g. "encoder.layer.2.attention.query.weight".
std::string layer_prefix(std::int32_t layer);

extern template struct StudentModel<float>;
extern template struct StudentModel<double>;
extern template struct TeacherModel<float>;
extern template struct TeacherModel<double>;

}  // namespace mkdm

#include "mkdm/model.hpp"

#include <set>

#include "mkdm/error.hpp"
#include "mkdm/ops.hpp"

namespace mkdm {
namespace {

using Code = CheckpointError::Code;

template <typename T>
Parameter<T> zeros(const std::string& name, Shape shape) {
  return Parameter<T>(name, BasicTensor<T>(std::move(shape)));
}

// Overwrites every parameter from the tensor of the same name.
template <typename Model>
void fill_from(Model& model, const Checkpoint& ckpt) {
  std::size_t used = 0;
  model.for_each([&](Parameter<float>& p) {
    const auto& src = ckpt.at(p.name);
    if (src.value.shape() != p.value.shape()) {
      throw CheckpointError(Code::mismatch, "tensor '" + p.name + "' has shape " + to_string(src.value.shape()) +
                                                ", expected " + to_string(p.value.shape()));
    }
    p.value = src.value;
    p.zero_grad();
    ++used;
  });
  if (used != ckpt.tensors.size()) {
    throw CheckpointError(Code::mismatch, "checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                                              " tensors but the model uses " + std::to_string(used));
  }
}

template <typename Model>
std::vector<NamedTensor> collect(Model& model) {
  std::vector<NamedTensor> out;
  model.for_each([&](Parameter<float>& p) { out.push_back({p.name, p.value}); });
  return out;
}

const nlohmann::json& config_field(const Checkpoint& ckpt, const char* key) {
  if (!ckpt.config.is_object() || !ckpt.config.contains(key)) {
    throw CheckpointError(Code::malformed, std::string("checkpoint config lacks '") + key + "'");
  }
  return ckpt.config.at(key);
}

}  // namespace

template <typename T>
StudentModel<T> StudentModel<T>::init(const EncoderConfig& config, std::vector<std::string> teacher_ids,
                                      std::uint64_t seed, bool head_bias) {
  std::set<std::string> unique(teacher_ids.begin(), teacher_ids.end());
  if (unique.size() != teacher_ids.size()) throw ConfigError("student: duplicate teacher ids");
  StudentModel m;
  m.encoder = Encoder<T>::init(config, seed);
  m.heads = StudentHeads<T>::init(config.hidden, static_cast<std::int32_t>(teacher_ids.size()), seed, head_bias);
  m.teacher_ids = std::move(teacher_ids);
  return m;
}

template <typename T>
std::int64_t StudentModel<T>::parameter_count() {
  std::int64_t n = 0;
  for_each([&](Parameter<T>& p) { n += static_cast<std::int64_t>(p.value.size()); });
  return n;
}

template <typename T>
std::vector<Parameter<T>*> StudentModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for_each([&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
template <typename U>
StudentModel<U> StudentModel<T>::cast() const {
  StudentModel<U> out;
  out.encoder = encoder.template cast<U>();
  out.heads = heads.template cast<U>();
  out.teacher_ids = teacher_ids;
  out.vocab_fingerprint = vocab_fingerprint;
  return out;
}

template <typename T>
TeacherModel<T> TeacherModel<T>::init(std::string id, const EncoderConfig& config, std::uint64_t seed) {
  TeacherModel m;
  m.id = std::move(id);
  m.encoder = Encoder<T>::init(config, seed);
  m.head_weight = zeros<T>("teacher.head.weight", {config.hidden, 1});
  init_normal(m.head_weight, seed, 0.02);
  m.head_bias = zeros<T>("teacher.head.bias", {1});
  return m;
}

template <typename T>
std::vector<Parameter<T>*> TeacherModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for_each([&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
StudentOutputs<T> student_forward(Tape<T>& tape, const EncodedBatch& batch, StudentModel<T>& model,
                                  const ForwardMode& mode, bool with_golden, bool with_soft) {
  const auto cls = extract_cls(encode(tape, batch, model.encoder, mode), batch);
  StudentOutputs<T> out;
  if (with_golden) out.golden = golden_forward(tape, cls, model.heads);
  if (with_soft) {
    for (std::int32_t i = 0; i < model.n_teachers(); ++i) out.soft.push_back(soft_forward(tape, cls, model.heads, i));
  }
  return out;
}

template <typename T>
Var<T> teacher_logits(Tape<T>& tape, const EncodedBatch& batch, TeacherModel<T>& model, const ForwardMode& mode) {
  const auto cls = extract_cls(encode(tape, batch, model.encoder, mode), batch);
  return ops::linear(cls, tape.parameter(model.head_weight), tape.parameter(model.head_bias));
}

namespace {

template <typename Fn>
void for_each_batch(std::span<const EncodedPair> pairs, std::int64_t batch_size, Fn&& fn) {
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  std::vector<const EncodedPair*> ptrs;
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(batch_size));
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&pairs[i]);
    fn(EncodedBatch::from_pairs(ptrs));
  }
}

}  // namespace

std::vector<PredictionBundle> predict(StudentModel<float>& model, std::span<const EncodedPair> pairs,
                                      const AggregationPolicy& policy, std::int64_t batch_size) {
  std::vector<PredictionBundle> out;
  out.reserve(pairs.size());
  for_each_batch(pairs, batch_size, [&](const EncodedBatch& batch) {
    Tape<float> tape(false);
    const auto heads = student_forward(tape, batch, model, ForwardMode{}, true, policy.include_soft);
    for (std::int64_t b = 0; b < batch.batch; ++b) {
      std::vector<double> scores;
      for (const auto& s : heads.soft) scores.push_back(s.value()[b]);
      out.push_back(make_bundle(heads.golden.value().at(b, 1), std::move(scores), policy));
    }
  });
  return out;
}

std::vector<double> predict_scores(TeacherModel<float>& model, std::span<const EncodedPair> pairs,
                                   std::int64_t batch_size) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for_each_batch(pairs, batch_size, [&](const EncodedBatch& batch) {
    Tape<float> tape(false);
    const auto scores = ops::sigmoid(teacher_logits(tape, batch, model, ForwardMode{}));
    for (std::int64_t b = 0; b < batch.batch; ++b) out.push_back(scores.value()[b]);
  });
  return out;
}

nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return {{"layers", c.layers},   {"hidden", c.hidden},         {"heads", c.heads},
          {"ffn", c.ffn},         {"dropout", c.dropout},       {"max_len", c.max_len},
          {"vocab_size", c.vocab_size}, {"trailing_sep", c.trailing_sep}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"layers",  "hidden",     "heads",       "ffn",
                                              "dropout", "max_len",    "vocab_size",  "trailing_sep"};
  if (!j.is_object()) throw ConfigError("encoder config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown encoder config field '" + key + "'");
  }
  EncoderConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.ffn = j.value("ffn", c.ffn);
    c.dropout = j.value("dropout", c.dropout);
    c.max_len = j.value("max_len", c.max_len);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.trailing_sep = j.value("trailing_sep", c.trailing_sep);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  return c;
}

Checkpoint to_checkpoint(StudentModel<float>& model, const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.tensors = collect(model);
  ckpt.config = {{"kind", "student"},
                 {"encoder", encoder_config_to_json(model.config())},
                 {"teacher_ids", model.teacher_ids},
                 {"head_bias", model.heads.with_bias},
                 {"vocab_fingerprint", model.vocab_fingerprint}};
  if (!extra.is_null()) ckpt.config["run"] = extra;
  return ckpt;
}

Checkpoint to_checkpoint(TeacherModel<float>& model, const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.tensors = collect(model);
  ckpt.config = {{"kind", "teacher"},
                 {"id", model.id},
                 {"encoder", encoder_config_to_json(model.config())},
                 {"vocab_fingerprint", model.vocab_fingerprint}};
  if (!extra.is_null()) ckpt.config["run"] = extra;
  return ckpt;
}

std::string checkpoint_kind(const Checkpoint& ckpt) {
  const auto& kind = config_field(ckpt, "kind");
  if (!kind.is_string()) throw CheckpointError(Code::malformed, "checkpoint kind is not a string");
  return kind.get<std::string>();
}

EncoderConfig checkpoint_encoder_config(const Checkpoint& ckpt) {
  try {
    return encoder_config_from_json(config_field(ckpt, "encoder"));
  } catch (const ConfigError& e) {
    throw CheckpointError(Code::malformed, e.what());
  }
}

StudentModel<float> student_from_checkpoint(const Checkpoint& ckpt) {
  if (checkpoint_kind(ckpt) != "student") throw CheckpointError(Code::mismatch, "checkpoint is not a student model");
  const auto config = checkpoint_encoder_config(ckpt);
  try {
    auto ids = config_field(ckpt, "teacher_ids").get<std::vector<std::string>>();
    const bool bias = config_field(ckpt, "head_bias").get<bool>();
    auto model = StudentModel<float>::init(config, std::move(ids), 0, bias);
    model.vocab_fingerprint = config_field(ckpt, "vocab_fingerprint").get<std::string>();
    fill_from(model, ckpt);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Code::malformed, std::string("student checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Code::malformed, e.what());
  }
}

TeacherModel<float> teacher_from_checkpoint(const Checkpoint& ckpt) {
  if (checkpoint_kind(ckpt) != "teacher") throw CheckpointError(Code::mismatch, "checkpoint is not a teacher model");
  const auto config = checkpoint_encoder_config(ckpt);
  try {
    auto model = TeacherModel<float>::init(config_field(ckpt, "id").get<std::string>(), config, 0);
    model.vocab_fingerprint = config_field(ckpt, "vocab_fingerprint").get<std::string>();
    fill_from(model, ckpt);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Code::malformed, std::string("teacher checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Code::malformed, e.what());
  }
}

LayerMap bottom_layers(std::int32_t student_layers) {
  LayerMap map;
  for (std::int32_t i = 0; i < student_layers; ++i) map.emplace_back(i, i);
  return map;
}

std::string layer_prefix(std::int32_t layer) { return "encoder.layer." + std::to_string(layer) + "."; }

InitReport init_from_checkpoint(StudentModel<float>& student, const Checkpoint& source, const LayerMap& layer_map,
                                bool copy_embeddings) {
  const std::int32_t student_layers = student.config().layers;
  std::set<std::int32_t> destinations;
  for (const auto& [src, dst] : layer_map) {
    if (dst < 0 || dst >= student_layers) {
      throw ConfigError("layer map destination " + std::to_string(dst) + " outside the student's " +
                        std::to_string(student_layers) + " layers");
    }
    if (src < 0) throw ConfigError("layer map source must be >= 0");
    if (!destinations.insert(dst).second) throw ConfigError("layer map fills student layer " + std::to_string(dst) + " twice");
  }

  // Resolve every source tensor before touching the student, so a failure leaves it unchanged.
  std::vector<std::pair<Parameter<float>*, const NamedTensor*>> plan;
  auto plan_copy = [&](Parameter<float>& dst, const std::string& src_name) {
    const auto& src = source.at(src_name);
    if (src.value.shape() != dst.value.shape()) {
      throw CheckpointError(Code::mismatch, "tensor '" + src_name + "' has shape " + to_string(src.value.shape()) +
                                                ", student '" + dst.name + "' needs " + to_string(dst.value.shape()));
    }
    plan.emplace_back(&dst, &src);
  };
  if (copy_embeddings) {
    plan_copy(student.encoder.embeddings.token, "embeddings.token");
    plan_copy(student.encoder.embeddings.segment, "embeddings.segment");
    plan_copy(student.encoder.embeddings.position, "embeddings.position");
  }
  for (const auto& [src, dst] : layer_map) {
    const std::string from = layer_prefix(src), to = layer_prefix(dst);
    student.encoder.layers[static_cast<std::size_t>(dst)].for_each(
        [&](Parameter<float>& p) { plan_copy(p, from + p.name.substr(to.size())); });
  }

  InitReport report;
  std::set<const Parameter<float>*> touched;
  for (auto& [dst, src] : plan) {
    dst->value = src->value;
    dst->zero_grad();
    touched.insert(dst);
  }
  student.for_each([&](Parameter<float>& p) {
    (touched.count(&p) ? report.mapped : report.unmapped).push_back(p.name);
  });
  return report;
}

template struct StudentModel<float>;
template struct StudentModel<double>;
template struct TeacherModel<float>;
template struct TeacherModel<double>;
template StudentModel<double> StudentModel<float>::cast<double>() const;

#define MKDM_INSTANTIATE_MODEL(T)                                                                              \
  template StudentOutputs<T> student_forward(Tape<T>&, const EncodedBatch&, StudentModel<T>&, const ForwardMode&, \
                                             bool, bool);                                                       \
  template Var<T> teacher_logits(Tape<T>&, const EncodedBatch&, TeacherModel<T>&, const ForwardMode&);
MKDM_INSTANTIATE_MODEL(float)
MKDM_INSTANTIATE_MODEL(double)
#undef MKDM_INSTANTIATE_MODEL

}  // namespace mkdm

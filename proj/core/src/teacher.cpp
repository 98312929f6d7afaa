#include "mkdm/teacher.hpp"

#include <set>

#include "mkdm/error.hpp"
#include "mkdm/ops.hpp"
#include "train_loop.hpp"

namespace mkdm {
namespace {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

}  // namespace

void TeacherConfig::validate() const {
  if (id.empty() || id.find_first_of("\t\n\r/\\") != std::string::npos) {
    throw ConfigError("teacher id must be non-empty and free of tabs, newlines and slashes");
  }
  if (!(lr > 0.0)) throw ConfigError("teacher '" + id + "': lr must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("teacher '" + id + "': dropout must lie in [0, 1)");
  if (epochs < 0) throw ConfigError("teacher '" + id + "': epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("teacher '" + id + "': batch_size must be >= 1");
  auto enc = encoder;
  enc.dropout = dropout;
  enc.validate();
}

nlohmann::json TeacherConfig::to_json() const {
  return {{"id", id},
          {"encoder", encoder_config_to_json(encoder)},
          {"seed", seed},
          {"lr", lr},
          {"dropout", dropout},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"optimizer", optimizer_name(optimizer)}};
}

TeacherConfig TeacherConfig::from_json(const nlohmann::json& j, const TeacherConfig& defaults) {
  static const std::set<std::string> known = {"id", "encoder", "seed", "lr", "dropout", "epochs", "batch_size",
                                              "optimizer"};
  if (!j.is_object()) throw ConfigError("teacher config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("teacher config: unknown field '" + key + "'");
  }
  TeacherConfig c = defaults;
  try {
    c.id = j.value("id", c.id);
    if (j.contains("encoder")) {
      auto merged = encoder_config_to_json(c.encoder);
      merged.update(j.at("encoder"));
      c.encoder = encoder_config_from_json(merged);
    }
    c.seed = j.value("seed", c.seed);
    c.lr = j.value("lr", c.lr);
    c.dropout = j.value("dropout", c.dropout);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("teacher config: ") + e.what());
  }
  return c;
}

std::vector<TeacherConfig> default_zoo(const EncoderConfig& encoder, std::uint64_t seed, std::int64_t epochs) {
  const double dropouts[] = {0.0, 0.1, 0.2};
  const double rates[] = {1e-3, 7e-4, 8.5e-4};
  std::vector<TeacherConfig> zoo;
  for (int i = 0; i < 3; ++i) {
    TeacherConfig t;
    t.id = "teacher" + std::to_string(i + 1);
    t.encoder = encoder;
    t.seed = seed + static_cast<std::uint64_t>(i) + 1;
    t.dropout = dropouts[i];
    t.lr = rates[i];
    t.epochs = epochs;
    zoo.push_back(t);
  }
  return zoo;
}

std::vector<TeacherConfig> zoo_from_json(const nlohmann::json& j, const EncoderConfig& base) {
  if (!j.is_object() || !j.contains("teachers") || !j.at("teachers").is_array() || j.at("teachers").empty()) {
    throw ConfigError("zoo config needs a non-empty \"teachers\" array");
  }
  TeacherConfig defaults;
  defaults.encoder = base;
  std::vector<TeacherConfig> zoo;
  std::set<std::string> ids;
  for (const auto& entry : j.at("teachers")) {
    auto t = TeacherConfig::from_json(entry, defaults);
    t.validate();
    if (!ids.insert(t.id).second) throw ConfigError("duplicate teacher id '" + t.id + "'");
    zoo.push_back(std::move(t));
  }
  return zoo;
}

nlohmann::json zoo_to_json(std::span<const TeacherConfig> zoo) {
  nlohmann::json teachers = nlohmann::json::array();
  for (const auto& t : zoo) teachers.push_back(t.to_json());
  return {{"teachers", teachers}};
}

TeacherResult train_teacher(const Dataset& train, const Dataset& val, const Vocabulary& vocab,
                            const TeacherConfig& config) {
  config.validate();
  if (train.empty()) throw DataError(DataError::Kind::malformed, "teacher '" + config.id + "': empty training set");
  const auto labels = train.labels();
  EncoderConfig enc = config.encoder;
  enc.dropout = config.dropout;
  if (enc.vocab_size != vocab.size()) {
    throw ConfigError("teacher '" + config.id + "': encoder vocab_size " + std::to_string(enc.vocab_size) +
                      " differs from vocabulary size " + std::to_string(vocab.size()));
  }

  TeacherResult result{TeacherModel<float>::init(config.id, enc, config.seed), {}, {}, std::nullopt};
  auto& model = result.model;
  model.vocab_fingerprint = vocab.fingerprint();
  const auto pairs = encode_dataset(train, vocab, enc.pair_options());
  const auto val_pairs = encode_dataset(val, vocab, enc.pair_options());
  const auto val_labels = val.empty() ? std::vector<std::int32_t>{} : val.labels();

  auto params = model.parameters();
  Optimizer<float> optimizer(config.optimizer, AdamOptions{config.lr});
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  auto step = [&](std::span<const std::size_t> rows) {
    const auto batch = detail::gather_batch(pairs, rows);
    Tensor target(Shape{static_cast<std::int64_t>(rows.size()), 1});
    for (std::size_t i = 0; i < rows.size(); ++i) target[static_cast<std::int64_t>(i)] = static_cast<float>(labels[rows[i]]);
    Tape<float> tape;
    const auto logits = teacher_logits(tape, batch, model, ForwardMode{true, &dropout_rng});
    const auto loss = ops::mean(ops::sigmoid_cross_entropy(logits, target));
    zero_grads<float>(params);
    tape.backward(loss);
    optimizer.step(params);
    const double l = loss.value().item();
    return detail::StepLoss{l, l, 0.0};
  };
  auto validate = [&](EpochRecord& record) {
    if (val.empty()) return;
    const auto scores = predict_scores(model, val_pairs);
    record.val_acc = accuracy(scores, val_labels);
    record.val_auc = auc(scores, val_labels);
  };
  result.history = detail::run_epochs(pairs.size(), config.batch_size, config.seed, config.epochs, step, validate, nullptr);

  result.train_report = evaluate(predict_scores(model, pairs), labels);
  if (!val.empty()) result.val_report = evaluate(predict_scores(model, val_pairs), val_labels);
  return result;
}

std::vector<double> predict_soft_labels(TeacherModel<float>& model, const Dataset& dataset, const Vocabulary& vocab) {
  if (model.vocab_fingerprint != vocab.fingerprint()) {
    throw DataError(DataError::Kind::mismatch, "teacher '" + model.id + "' was trained with vocabulary " +
                                                   model.vocab_fingerprint + ", got " + vocab.fingerprint());
  }
  if (dataset.empty()) return {};
  return predict_scores(model, encode_dataset(dataset, vocab, model.config().pair_options()));
}

SoftLabelCache build_cache(std::span<TeacherModel<float>* const> teachers, const Dataset& dataset,
                           const Vocabulary& vocab) {
  if (teachers.empty()) throw ConfigError("build_cache needs at least one teacher");
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (auto* t : teachers) {
    if (!seen.insert(t->id).second) throw DataError(DataError::Kind::duplicate_id, "duplicate teacher id '" + t->id + "'");
    ids.push_back(t->id);
  }
  std::vector<std::vector<float>> rows(dataset.size());
  for (auto* t : teachers) {
    const auto scores = predict_soft_labels(*t, dataset, vocab);
    for (std::size_t i = 0; i < scores.size(); ++i) rows[i].push_back(static_cast<float>(scores[i]));
  }
  return SoftLabelCache(std::move(ids), dataset.ids(), std::move(rows));
}

}  // namespace mkdm

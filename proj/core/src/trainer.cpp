#include "mkdm/trainer.hpp"

#include <set>

#include "mkdm/error.hpp"
#include "mkdm/ops.hpp"
#include "train_loop.hpp"

namespace mkdm {
namespace {

constexpr double kRandomInitLr = 1e-3;
constexpr double kCheckpointInitLr = 3e-4;

bool uses_soft(TrainMode mode) { return mode != TrainMode::gold_only; }
bool uses_golden(TrainMode mode) { return mode != TrainMode::soft_only_pretrain; }

std::vector<std::string> resolve_teachers(const TrainConfig& config, const SoftLabelCache* cache) {
  if (!uses_soft(config.mode)) return {};
  if (!cache) throw ConfigError("mode " + to_string(config.mode) + " needs a soft-label cache");
  std::vector<std::string> ids = config.teachers.empty() ? cache->teacher_ids() : config.teachers;
  if (ids.empty()) throw ConfigError("the soft-label cache has no teacher columns");
  if (config.mode == TrainMode::single_student && ids.size() != 1) {
    throw ConfigError("single_student mode needs exactly one teacher column, got " + std::to_string(ids.size()));
  }
  return ids;
}

double soft_mse(StudentModel<float>& model, std::span<const EncodedPair> pairs, const Dataset& data,
                std::int64_t batch_size) {
  const AggregationPolicy policy{false, true};
  const auto bundles = predict(model, pairs, policy, batch_size);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    for (std::size_t t = 0; t < bundles[i].teacher_scores.size(); ++t) {
      const double d = bundles[i].teacher_scores[t] - data.examples[i].soft.at(t);
      total += d * d;
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::mkdm: return "mkdm";
    case TrainMode::single_student: return "single_student";
    case TrainMode::gold_only: return "gold_only";
    case TrainMode::soft_only_pretrain: return "soft_only_pretrain";
  }
  return "unknown";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "mkdm") return TrainMode::mkdm;
  if (name == "single_student" || name == "single") return TrainMode::single_student;
  if (name == "gold_only" || name == "gold-only") return TrainMode::gold_only;
  if (name == "soft_only_pretrain" || name == "pretrain") return TrainMode::soft_only_pretrain;
  throw ConfigError("unknown training mode '" + name + "'");
}

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::automatic: return "automatic";
    case AggregationMode::all_heads: return "all_heads";
    case AggregationMode::soft_only: return "soft_only";
    case AggregationMode::golden_only: return "golden_only";
  }
  return "unknown";
}

AggregationMode parse_aggregation_mode(const std::string& name) {
  if (name == "automatic") return AggregationMode::automatic;
  if (name == "all_heads") return AggregationMode::all_heads;
  if (name == "soft_only") return AggregationMode::soft_only;
  if (name == "golden_only") return AggregationMode::golden_only;
  throw ConfigError("unknown aggregation mode '" + name + "'");
}

double TrainConfig::learning_rate() const {
  if (lr) return *lr;
  return init.kind == InitSpec::Kind::checkpoint ? kCheckpointInitLr : kRandomInitLr;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (lr && !(*lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (init.kind == InitSpec::Kind::checkpoint && init.path.empty()) throw ConfigError("checkpoint init needs a path");
  if (mode == TrainMode::single_student && teachers.size() > 1) {
    throw ConfigError("single_student mode takes one teacher id");
  }
  if (aggregation == AggregationMode::soft_only && mode == TrainMode::gold_only) {
    throw ConfigError("soft_only aggregation needs teacher heads");
  }
  student.validate();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json map = nlohmann::json::array();
  for (const auto& [src, dst] : init.layer_map) map.push_back({src, dst});
  return {{"alpha", alpha},
          {"lr", lr ? nlohmann::json(*lr) : nlohmann::json()},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"student", encoder_config_to_json(student)},
          {"mode", to_string(mode)},
          {"init",
           {{"kind", init.kind == InitSpec::Kind::random ? "random" : "checkpoint"},
            {"path", init.path.generic_string()},
            {"layer_map", map},
            {"copy_embeddings", init.copy_embeddings}}},
          {"optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
          {"freeze_embeddings", freeze_embeddings},
          {"head_bias", head_bias},
          {"teachers", teachers},
          {"aggregation", to_string(aggregation)},
          {"eval_batch_size", eval_batch_size}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("train config: unknown field '" + key + "'");
  }
  try {
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("lr") && !j.at("lr").is_null()) c.lr = j.at("lr").get<double>();
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("student")) {
      auto merged = encoder_config_to_json(c.student);
      merged.update(j.at("student"));
      c.student = encoder_config_from_json(merged);
    }
    if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
    if (j.contains("init")) {
      const auto& init = j.at("init");
      static const std::set<std::string> init_keys = {"kind", "path", "layer_map", "copy_embeddings"};
      for (const auto& [key, value] : init.items()) {
        if (!init_keys.count(key)) throw ConfigError("train config: unknown init field '" + key + "'");
      }
      const auto kind = init.value("kind", std::string("random"));
      if (kind == "random") {
        c.init.kind = InitSpec::Kind::random;
      } else if (kind == "checkpoint") {
        c.init.kind = InitSpec::Kind::checkpoint;
      } else {
        throw ConfigError("unknown init kind '" + kind + "'");
      }
      c.init.path = init.value("path", std::string());
      for (const auto& pair : init.value("layer_map", nlohmann::json::array())) {
        c.init.layer_map.emplace_back(pair.at(0).get<std::int32_t>(), pair.at(1).get<std::int32_t>());
      }
      c.init.copy_embeddings = init.value("copy_embeddings", true);
    }
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.freeze_embeddings = j.value("freeze_embeddings", c.freeze_embeddings);
    c.head_bias = j.value("head_bias", c.head_bias);
    c.teachers = j.value("teachers", c.teachers);
    if (j.contains("aggregation")) c.aggregation = parse_aggregation_mode(j.at("aggregation").get<std::string>());
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::bert_base_profile(std::int32_t vocab_size) {
  TrainConfig c;
  c.student = EncoderConfig::bert_base(vocab_size, 3);
  c.batch_size = 256;
  c.lr = 3e-5;
  return c;
}

AggregationPolicy aggregation_policy(const TrainConfig& config, std::int32_t n_teachers) {
  const bool have_soft = n_teachers > 0;
  switch (config.aggregation) {
    case AggregationMode::all_heads: return {true, have_soft};
    case AggregationMode::golden_only: return {true, false};
    case AggregationMode::soft_only:
      if (!have_soft) throw ConfigError("soft_only aggregation without teacher heads");
      return {false, true};
    case AggregationMode::automatic: break;
  }
  if (config.mode == TrainMode::soft_only_pretrain) return {false, true};
  if (config.mode == TrainMode::gold_only || !have_soft) return {true, false};
  // A head whose loss weight is zero never trains, so it stays out of the average.
  return {config.alpha < 1.0, config.alpha > 0.0};
}

EvalReport evaluate_student(StudentModel<float>& model, const Dataset& data, const Vocabulary& vocab,
                            const AggregationPolicy& policy, std::int64_t batch_size) {
  const auto pairs = encode_dataset(data, vocab, model.config().pair_options());
  const auto bundles = predict(model, pairs, policy, batch_size);
  std::vector<double> scores;
  scores.reserve(bundles.size());
  for (const auto& b : bundles) scores.push_back(b.aggregate);
  return evaluate(scores, data.labels());
}

TrainResult train_from(StudentModel<float> model, const Dataset& train, const SoftLabelCache* cache,
                       const Dataset& val, const SoftLabelCache* val_cache, const Vocabulary& vocab,
                       const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw DataError(DataError::Kind::malformed, "empty training set");
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("student vocab_size " + std::to_string(model.config().vocab_size) +
                      " differs from vocabulary size " + std::to_string(vocab.size()));
  }
  if (model.vocab_fingerprint.empty()) model.vocab_fingerprint = vocab.fingerprint();
  if (model.vocab_fingerprint != vocab.fingerprint()) {
    throw ConfigError("student weights were trained with a different vocabulary");
  }
  const TrainMode mode = config.mode;
  const std::int32_t n = model.n_teachers();
  if (uses_soft(mode) && n == 0) throw ConfigError("mode " + to_string(mode) + " needs at least one teacher head");
  if (!uses_soft(mode) && n > 0) throw ConfigError("gold_only mode expects a student without teacher heads");

  // Join soft labels up front so misalignment fails before any update.
  Dataset data = train;
  if (n > 0) {
    if (!cache) throw ConfigError("mode " + to_string(mode) + " needs a soft-label cache");
    data = attach_soft_labels(train, cache->select(model.teacher_ids));
  }
  const auto labels = uses_golden(mode) ? data.labels() : std::vector<std::int32_t>{};
  Dataset val_data = val;
  if (val_cache && !val.empty()) val_data = attach_soft_labels(val, val_cache->select(model.teacher_ids));

  const auto options = model.config().pair_options();
  const auto pairs = encode_dataset(data, vocab, options);
  const auto val_pairs = encode_dataset(val_data, vocab, options);
  const auto policy = aggregation_policy(config, n);
  const double alpha = mode == TrainMode::gold_only ? 0.0 : config.alpha;

  std::set<const Parameter<float>*> excluded;
  if (config.freeze_embeddings) {
    auto& e = model.encoder.embeddings;
    excluded.insert({&e.token, &e.segment, &e.position});
  }
  if (!uses_golden(mode)) model.heads.for_each_golden([&](Parameter<float>& p) { excluded.insert(&p); });
  const auto all_params = model.parameters();
  std::vector<Parameter<float>*> trained;
  for (auto* p : all_params) {
    if (!excluded.count(p)) trained.push_back(p);
  }

  Optimizer<float> optimizer(config.optimizer, AdamOptions{config.learning_rate()});
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  auto step = [&](std::span<const std::size_t> rows) {
    const auto batch = detail::gather_batch(pairs, rows);
    Tape<float> tape;
    const auto out = student_forward(tape, batch, model, ForwardMode{true, &dropout_rng}, uses_golden(mode), n > 0);

    std::vector<Var<float>> soft_losses;
    std::vector<float> targets(rows.size());
    for (std::int32_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < rows.size(); ++i) targets[i] = data.examples[rows[i]].soft[static_cast<std::size_t>(t)];
      soft_losses.push_back(soft_loss(out.soft[static_cast<std::size_t>(t)], std::span<const float>(targets)));
    }
    double soft_mean = 0.0;
    for (const auto& l : soft_losses) soft_mean += l.value().item();
    if (n > 0) soft_mean /= n;

    Var<float> loss;
    double golden_value = 0.0;
    if (uses_golden(mode)) {
      std::vector<std::int32_t> gold(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) gold[i] = labels[rows[i]];
      const auto lg = golden_loss(out.golden, std::span<const std::int32_t>(gold));
      golden_value = lg.value().item();
      loss = combined_loss(lg, std::span<const Var<float>>(soft_losses), alpha);
    } else {
      Var<float> total = soft_losses[0];
      for (std::size_t t = 1; t < soft_losses.size(); ++t) total = ops::add(total, soft_losses[t]);
      loss = ops::scale(total, 1.0f / static_cast<float>(n));
    }
    zero_grads<float>(all_params);
    tape.backward(loss);
    optimizer.step(trained);
    return detail::StepLoss{loss.value().item(), golden_value, soft_mean};
  };

  const bool val_labeled = !val_data.empty() && val_data.labeled;
  const auto val_labels = val_labeled ? val_data.labels() : std::vector<std::int32_t>{};
  auto validate = [&](EpochRecord& record) {
    if (val_data.empty()) return;
    if (val_labeled) {
      const auto bundles = predict(model, val_pairs, policy, config.eval_batch_size);
      std::vector<double> scores;
      for (const auto& b : bundles) scores.push_back(b.aggregate);
      record.val_acc = accuracy(scores, val_labels);
      record.val_auc = auc(scores, val_labels);
    }
    if (val_cache && n > 0) record.val_soft_mse = soft_mse(model, val_pairs, val_data, config.eval_batch_size);
  };

  std::vector<detail::StepLoss> steps;
  auto history = detail::run_epochs(pairs.size(), config.batch_size, config.seed, config.epochs, step, validate, &steps);
  TrainResult result{std::move(model), std::move(history), {}, {}, {}, std::nullopt};
  for (const auto& s : steps) {
    result.step_losses.push_back(s.total);
    result.step_golden.push_back(s.golden);
    result.step_soft.push_back(s.soft);
  }
  return result;
}

TrainResult train_mkdm(const Dataset& train, const SoftLabelCache* cache, const Dataset& val, const Vocabulary& vocab,
                       const TrainConfig& config) {
  config.validate();
  if (config.mode == TrainMode::soft_only_pretrain) throw ConfigError("use pretrain_soft_only for stage-1 training");
  auto model = StudentModel<float>::init(config.student, resolve_teachers(config, cache), config.seed, config.head_bias);
  model.vocab_fingerprint = vocab.fingerprint();
  std::optional<InitReport> report;
  if (config.init.kind == InitSpec::Kind::checkpoint) {
    const auto source = load_checkpoint(config.init.path);
    const auto map = config.init.layer_map.empty() ? bottom_layers(config.student.layers) : config.init.layer_map;
    report = init_from_checkpoint(model, source, map, config.init.copy_embeddings);
  }
  auto result = train_from(std::move(model), train, cache, val, nullptr, vocab, config);
  result.init_report = std::move(report);
  return result;
}

TrainResult pretrain_soft_only(const Dataset& unlabeled, const SoftLabelCache& cache, const Dataset& val,
                               const SoftLabelCache* val_cache, const Vocabulary& vocab, const TrainConfig& config) {
  TrainConfig c = config;
  c.mode = TrainMode::soft_only_pretrain;
  c.validate();
  auto model = StudentModel<float>::init(c.student, resolve_teachers(c, &cache), c.seed, c.head_bias);
  model.vocab_fingerprint = vocab.fingerprint();
  return train_from(std::move(model), unlabeled, &cache, val, val_cache, vocab, c);
}

TrainResult finetune_stage2(const Dataset& train, const SoftLabelCache* cache, const Dataset& val,
                            const Vocabulary& vocab, const TrainConfig& config, const Checkpoint& stage1) {
  config.validate();
  if (config.mode == TrainMode::soft_only_pretrain) throw ConfigError("stage 2 cannot run in pretrain mode");
  auto model = student_from_checkpoint(stage1);
  const auto diffs = config_differences(model.config(), config.student);
  if (!diffs.empty()) {
    std::string fields;
    for (const auto& d : diffs) fields += (fields.empty() ? "" : ", ") + d;
    throw ConfigError("stage-1 checkpoint encoder differs from the student config in: " + fields);
  }
  const auto wanted = resolve_teachers(config, cache);
  if (wanted != model.teacher_ids) {
    throw ConfigError("stage-1 checkpoint teacher heads do not match the selected cache columns");
  }
  TrainConfig c = config;
  if (!c.lr) c.lr = kCheckpointInitLr;
  return train_from(std::move(model), train, cache, val, nullptr, vocab, c);
}

}  // namespace mkdm

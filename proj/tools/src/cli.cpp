#include "mkdm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "mkdm/bench.hpp"
#include "mkdm/data.hpp"
#include "mkdm/error.hpp"
#include "mkdm/teacher.hpp"
#include "mkdm/trainer.hpp"

namespace mkdm::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::int32_t kDefaultTeacherLayers = 6;
// Room left in the word-piece vocabulary for character fallbacks beyond the lexicon.
constexpr std::int32_t kPieceHeadroom = 200;

// Thrown for flag combinations CLI11 cannot express; maps to the usage exit code.
class UsageError : public Error {
 public:
  using Error::Error;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw DataError(DataError::Kind::io, "cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + '\n'); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(DataError::Kind::io, "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + item + "' is not a number");
    }
  }
  if (values.empty()) throw UsageError(what + " is empty");
  return values;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// The standard data directory written by gen-data.
struct DataDir {
  fs::path root;
  Dataset train, val, test;
  std::optional<Dataset> unlabeled;
  Vocabulary vocab;
  std::vector<fs::path> files;

  const Dataset& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    if (name == "unlabeled") {
      if (!unlabeled) throw DataError(DataError::Kind::io, "data dir " + root.string() + " has no unlabeled.tsv");
      return *unlabeled;
    }
    throw UsageError("unknown split '" + name + "'");
  }
};

DataDir load_data_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError(DataError::Kind::io, "data dir " + root.string() + " does not exist");
  DataDir d;
  d.root = root;
  auto load = [&](const char* name) {
    const auto path = root / name;
    auto ds = load_tsv(path);
    d.files.push_back(path);
    return ds;
  };
  d.train = load("train.tsv");
  d.val = load("val.tsv");
  d.test = load("test.tsv");
  for (const auto* part : {&d.train, &d.val, &d.test}) {
    if (!part->labeled) throw DataError(DataError::Kind::malformed, "train/val/test splits must carry labels");
  }
  if (fs::exists(root / "unlabeled.tsv")) d.unlabeled = load("unlabeled.tsv");
  d.vocab = Vocabulary::load(root / "vocab.txt");
  d.files.push_back(root / "vocab.txt");
  return d;
}

// Sorted list of regular files with the given extension.
std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw DataError(DataError::Kind::io, "directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void finish_manifest(RunManifest& m, const fs::path& path, const Stopwatch& clock) {
  m.outputs.erase(std::remove(m.outputs.begin(), m.outputs.end(), path), m.outputs.end());
  m.wall_seconds = clock.seconds();
  m.write(path);
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string spec;
  std::string out;
  std::string split = "0.8,0.1,0.1";
  std::int32_t vocab_size = 0;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  const Stopwatch clock;
  SyntheticSpec spec;
  std::vector<fs::path> inputs;
  if (!a.spec.empty()) {
    spec = SyntheticSpec::from_json(read_json_file(a.spec));
    inputs.push_back(a.spec);
  }
  spec.validate();
  const auto fractions = parse_number_list(a.split, "--split");
  if (fractions.size() != 3) throw UsageError("--split takes three fractions: train,val,test");
  const std::int32_t vocab_target = a.vocab_size > 0 ? a.vocab_size : spec.vocab_size + kReservedCount + kPieceHeadroom;

  const json config = {{"spec", spec.to_json()}, {"split", fractions}, {"vocab_size", vocab_target}};
  RunManifest m;
  m.command = "gen-data";
  m.config = config;
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, config, inputs);

  const auto corpus = generate_synthetic(spec);
  const auto parts = split_dataset(corpus, fractions, spec.seed);
  std::optional<Dataset> unlabeled;
  if (spec.unlabeled_size > 0) unlabeled = generate_unlabeled(spec, spec.unlabeled_size);

  auto texts = parts[0].texts();
  if (unlabeled) {
    const auto more = unlabeled->texts();
    texts.insert(texts.end(), more.begin(), more.end());
  }
  const auto vocab = build_vocab(texts, static_cast<std::size_t>(vocab_target));

  const fs::path dir = a.out;
  ensure_dir(dir);
  const char* names[] = {"train.tsv", "val.tsv", "test.tsv"};
  for (int i = 0; i < 3; ++i) {
    save_tsv(parts[static_cast<std::size_t>(i)], dir / names[i]);
    m.outputs.push_back(dir / names[i]);
  }
  if (unlabeled) {
    save_tsv(*unlabeled, dir / "unlabeled.tsv");
    m.outputs.push_back(dir / "unlabeled.tsv");
  }
  vocab.save(dir / "vocab.txt");
  m.outputs.push_back(dir / "vocab.txt");
  write_json(dir / "spec.json", spec.to_json());
  m.outputs.push_back(dir / "spec.json");
  finish_manifest(m, dir / "manifest.json", clock);

  out << "wrote " << parts[0].size() << "/" << parts[1].size() << "/" << parts[2].size()
      << " train/val/test examples";
  if (unlabeled) out << " and " << unlabeled->size() << " unlabeled";
  out << ", vocabulary of " << vocab.size() << " pieces to " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train-teachers

struct TrainTeachersArgs {
  std::string data;
  std::string zoo;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> epochs;
};

std::vector<TeacherConfig> resolve_zoo(const TrainTeachersArgs& a, const Vocabulary& vocab, std::vector<fs::path>& inputs) {
  json j = json::object();
  if (!a.zoo.empty()) {
    j = read_json_file(a.zoo);
    inputs.push_back(a.zoo);
    if (!j.is_object()) throw ConfigError("zoo config must be a JSON object");
    static const std::set<std::string> known = {"encoder", "seed", "epochs", "teachers"};
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw ConfigError("zoo config: unknown field '" + key + "'");
    }
  }
  EncoderConfig base;
  base.layers = kDefaultTeacherLayers;
  if (j.contains("encoder")) {
    auto merged = encoder_config_to_json(base);
    merged.update(j.at("encoder"));
    base = encoder_config_from_json(merged);
  }
  base.vocab_size = vocab.size();
  std::uint64_t seed = 1;
  std::int64_t epochs = 5;
  try {
    seed = a.seed.value_or(j.value("seed", seed));
    epochs = j.value("epochs", epochs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("zoo config: ") + e.what());
  }
  auto zoo = j.contains("teachers") ? zoo_from_json(j, base) : default_zoo(base, seed, epochs);
  for (auto& t : zoo) {
    if (a.epochs) t.epochs = *a.epochs;
    t.encoder.vocab_size = vocab.size();
    t.validate();
  }
  return zoo;
}

int train_teachers(const TrainTeachersArgs& a, std::ostream& out, std::ostream& err) {
  const Stopwatch clock;
  const auto data = load_data_dir(a.data);
  std::vector<fs::path> inputs = data.files;
  const auto zoo = resolve_zoo(a, data.vocab, inputs);

  const json config = zoo_to_json(zoo);
  RunManifest m;
  m.command = "train-teachers";
  m.config = config;
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, config, inputs);

  const fs::path dir = a.out;
  ensure_dir(dir);
  std::vector<std::string> failed;
  for (const auto& t : zoo) {
    try {
      auto result = train_teacher(data.train, data.val, data.vocab, t);
      const auto ckpt_path = dir / (t.id + ".ckpt");
      save_checkpoint(to_checkpoint(result.model, {{"teacher", t.to_json()}, {"run_id", m.run_id}}), ckpt_path);
      json report = {{"id", t.id}, {"config", t.to_json()}, {"train", result.train_report.to_json()}};
      report["val"] = result.val_report ? result.val_report->to_json() : json();
      write_json(dir / (t.id + ".report.json"), report);
      write_text(dir / (t.id + ".history.jsonl"), history_jsonl(result.history, false));
      for (const char* suffix : {".ckpt", ".report.json", ".history.jsonl"}) m.outputs.push_back(dir / (t.id + suffix));
      out << t.id << ": train auc " << format_value(result.train_report.auc);
      if (result.val_report) out << ", val auc " << format_value(result.val_report->auc);
      out << '\n';
    } catch (const std::exception& e) {
      err << "teacher '" << t.id << "' failed: " << e.what() << '\n';
      failed.push_back(t.id);
    }
  }
  finish_manifest(m, dir / "manifest.json", clock);
  if (!failed.empty()) {
    std::string list;
    for (const auto& id : failed) list += (list.empty() ? "" : ", ") + id;
    err << failed.size() << " of " << zoo.size() << " teachers failed: " << list << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// label

struct LabelArgs {
  std::string teachers;
  std::string data;
  std::string out;
  std::string split = "train";
};

int label(const LabelArgs& a, std::ostream& out) {
  const Stopwatch clock;
  const auto data = load_data_dir(a.data);
  const auto ckpt_paths = files_with_extension(a.teachers, ".ckpt");
  if (ckpt_paths.empty()) throw DataError(DataError::Kind::io, "no .ckpt files in " + a.teachers);

  std::vector<TeacherModel<float>> models;
  for (const auto& path : ckpt_paths) {
    const auto ckpt = load_checkpoint(path);
    if (checkpoint_kind(ckpt) != "teacher") {
      throw CheckpointError(CheckpointError::Code::mismatch, path.string() + " is not a teacher checkpoint");
    }
    models.push_back(teacher_from_checkpoint(ckpt));
  }
  std::vector<TeacherModel<float>*> ptrs;
  for (auto& model : models) ptrs.push_back(&model);

  Dataset target;
  if (a.split == "all") {
    for (const char* name : {"train", "val", "test", "unlabeled"}) {
      if (std::string(name) == "unlabeled" && !data.unlabeled) continue;
      const auto& part = data.split(name);
      target.examples.insert(target.examples.end(), part.examples.begin(), part.examples.end());
    }
  } else {
    target = data.split(a.split);
  }

  std::vector<fs::path> inputs = data.files;
  inputs.insert(inputs.end(), ckpt_paths.begin(), ckpt_paths.end());
  std::vector<std::string> ids;
  for (const auto& model : models) ids.push_back(model.id);
  const json config = {{"split", a.split}, {"teachers", ids}};
  RunManifest m;
  m.command = "label";
  m.config = config;
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, config, inputs);

  const auto cache = build_cache(ptrs, target, data.vocab);
  const fs::path path = a.out;
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  cache.save(path);
  m.outputs.push_back(path);
  finish_manifest(m, fs::path(path.string() + ".manifest.json"), clock);
  out << "labeled " << cache.size() << " examples with " << cache.n_teachers() << " teachers\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// distill, pretrain, finetune

struct StudentArgs {
  std::string data;
  std::string cache;
  std::string config;
  std::string out;
  std::string init;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::int32_t> layers;
  std::optional<std::int64_t> epochs;
  std::vector<std::string> teachers;
};

TrainConfig resolve_train_config(const StudentArgs& a, const Vocabulary& vocab, std::vector<fs::path>& inputs) {
  TrainConfig c;
  if (!a.config.empty()) {
    c = TrainConfig::from_json(read_json_file(a.config));
    inputs.push_back(a.config);
  }
  if (a.mode) c.mode = parse_train_mode(*a.mode);
  if (a.alpha) c.alpha = *a.alpha;
  if (a.lr) c.lr = *a.lr;
  if (a.seed) c.seed = *a.seed;
  if (a.layers) c.student.layers = *a.layers;
  if (a.epochs) c.epochs = *a.epochs;
  if (!a.teachers.empty()) c.teachers = a.teachers;
  c.student.vocab_size = vocab.size();
  return c;
}

std::optional<SoftLabelCache> load_cache(const StudentArgs& a, std::vector<fs::path>& inputs) {
  if (a.cache.empty()) return std::nullopt;
  inputs.push_back(a.cache);
  return SoftLabelCache::load(a.cache);
}

// Cache restricted to `data`, with the teacher selection single-student mode defaults to.
std::optional<SoftLabelCache> cache_for(const std::optional<SoftLabelCache>& cache, const Dataset& data,
                                        TrainConfig& config) {
  if (config.mode == TrainMode::gold_only) return std::nullopt;
  if (!cache) throw ConfigError("mode " + to_string(config.mode) + " needs --cache");
  if (config.mode == TrainMode::single_student && config.teachers.empty() && cache->n_teachers() > 0) {
    config.teachers = {cache->teacher_ids().front()};
  }
  const auto ids = data.ids();
  return cache->rows_for(ids);
}

struct StudentRun {
  TrainResult result;
  TrainConfig config;
  EvalReport test;
};

void write_student_outputs(const fs::path& dir, StudentRun& run, RunManifest& m, const json& extra = json::object()) {
  save_checkpoint(to_checkpoint(run.result.model, {{"train", run.config.to_json()}, {"run_id", m.run_id}}),
                  dir / "student.ckpt");
  write_text(dir / "history.jsonl", history_jsonl(run.result.history, false));
  json report = {{"mode", to_string(run.config.mode)}, {"test", run.test.to_json()}};
  if (!run.result.history.empty()) {
    report["final_epoch"] = run.result.history.back().to_json();
    report["final_epoch"].erase("wall_seconds");
  }
  if (run.result.init_report) {
    report["init"] = {{"mapped", run.result.init_report->mapped}, {"unmapped", run.result.init_report->unmapped}};
  }
  report.update(extra);
  write_json(dir / "report.json", report);
  for (const char* name : {"student.ckpt", "history.jsonl", "report.json"}) m.outputs.push_back(dir / name);
}

void print_summary(std::ostream& out, const StudentRun& run) {
  out << to_string(run.config.mode) << ": " << run.result.history.size() << " epochs, test acc "
      << format_value(run.test.acc) << ", test auc " << format_value(run.test.auc) << '\n';
}

int distill(const StudentArgs& a, std::ostream& out) {
  const Stopwatch clock;
  const auto data = load_data_dir(a.data);
  std::vector<fs::path> inputs = data.files;
  auto config = resolve_train_config(a, data.vocab, inputs);
  if (config.mode == TrainMode::soft_only_pretrain) throw UsageError("use the pretrain command for stage-1 training");
  if (!a.init.empty()) {
    config.init.kind = InitSpec::Kind::checkpoint;
    config.init.path = a.init;
  }
  if (config.init.kind == InitSpec::Kind::checkpoint) inputs.push_back(config.init.path);
  const auto cache = load_cache(a, inputs);
  const auto train_cache = cache_for(cache, data.train, config);
  config.validate();

  RunManifest m;
  m.command = "distill";
  m.config = config.to_json();
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, m.config, inputs);

  StudentRun run{train_mkdm(data.train, train_cache ? &*train_cache : nullptr, data.val, data.vocab, config), config,
                 {}};
  run.test = evaluate_student(run.result.model, data.test, data.vocab,
                              aggregation_policy(config, run.result.model.n_teachers()), config.eval_batch_size);
  const fs::path dir = a.out;
  ensure_dir(dir);
  write_student_outputs(dir, run, m);
  finish_manifest(m, dir / "manifest.json", clock);
  print_summary(out, run);
  return kExitOk;
}

int pretrain(const StudentArgs& a, std::ostream& out) {
  const Stopwatch clock;
  const auto data = load_data_dir(a.data);
  std::vector<fs::path> inputs = data.files;
  auto config = resolve_train_config(a, data.vocab, inputs);
  config.mode = TrainMode::soft_only_pretrain;
  const auto& unlabeled = data.split("unlabeled");
  const auto cache = load_cache(a, inputs);
  if (!cache) throw ConfigError("pretrain needs --cache covering unlabeled.tsv");
  const auto train_cache = cache_for(cache, unlabeled, config);
  // The validation split only gets a soft-label target when the cache covers it.
  std::optional<SoftLabelCache> val_cache;
  const auto val_ids = data.val.ids();
  if (std::all_of(val_ids.begin(), val_ids.end(), [&](const auto& id) { return cache->find(id) != nullptr; })) {
    val_cache = cache_for(cache, data.val, config);
  }
  config.validate();

  RunManifest m;
  m.command = "pretrain";
  m.config = config.to_json();
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, m.config, inputs);

  StudentRun run{pretrain_soft_only(unlabeled, *train_cache, data.val, val_cache ? &*val_cache : nullptr, data.vocab,
                                    config),
                 config,
                 {}};
  run.test = evaluate_student(run.result.model, data.test, data.vocab,
                              aggregation_policy(config, run.result.model.n_teachers()), config.eval_batch_size);
  const fs::path dir = a.out;
  ensure_dir(dir);
  write_student_outputs(dir, run, m);
  finish_manifest(m, dir / "manifest.json", clock);
  print_summary(out, run);
  return kExitOk;
}

int finetune(const StudentArgs& a, std::ostream& out) {
  const Stopwatch clock;
  const auto data = load_data_dir(a.data);
  std::vector<fs::path> inputs = data.files;
  auto config = resolve_train_config(a, data.vocab, inputs);
  if (config.mode == TrainMode::soft_only_pretrain) throw UsageError("finetune cannot run in pretrain mode");
  const auto stage1 = load_checkpoint(a.init);
  inputs.push_back(a.init);
  if (checkpoint_kind(stage1) != "student") {
    throw CheckpointError(CheckpointError::Code::mismatch, a.init + " is not a student checkpoint");
  }
  // Unless the config says otherwise, stage 2 keeps the stage-1 encoder shape.
  if (a.config.empty() && !a.layers) {
    config.student = checkpoint_encoder_config(stage1);
    config.student.vocab_size = data.vocab.size();
  }
  const auto cache = load_cache(a, inputs);
  const auto train_cache = cache_for(cache, data.train, config);
  config.validate();

  RunManifest m;
  m.command = "finetune";
  m.config = config.to_json();
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, m.config, inputs);

  StudentRun run{finetune_stage2(data.train, train_cache ? &*train_cache : nullptr, data.val, data.vocab, config,
                                 stage1),
                 config,
                 {}};
  run.test = evaluate_student(run.result.model, data.test, data.vocab,
                              aggregation_policy(config, run.result.model.n_teachers()), config.eval_batch_size);
  const fs::path dir = a.out;
  ensure_dir(dir);
  write_student_outputs(dir, run, m);
  finish_manifest(m, dir / "manifest.json", clock);
  print_summary(out, run);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  StudentArgs student;
  std::string axis;
  bool no_qps = false;
  double qps_seconds = 1.0;
  std::int32_t qps_reps = 3;
};

int sweep(const SweepArgs& a, std::ostream& out) {
  const Stopwatch clock;
  const auto colon = a.axis.find(':');
  if (colon == std::string::npos) throw UsageError("--axis must look like layers:1,3,5 or alpha:0.1,0.5");
  const std::string axis = a.axis.substr(0, colon);
  if (axis != "layers" && axis != "alpha") throw UsageError("unknown sweep axis '" + axis + "'");
  const auto values = parse_number_list(a.axis.substr(colon + 1), "--axis");

  const auto data = load_data_dir(a.student.data);
  std::vector<fs::path> inputs = data.files;
  auto base = resolve_train_config(a.student, data.vocab, inputs);
  if (base.mode == TrainMode::soft_only_pretrain) throw UsageError("sweep runs distill modes only");
  const auto cache = load_cache(a.student, inputs);
  const auto train_cache = cache_for(cache, data.train, base);

  std::vector<TrainConfig> settings;
  for (double v : values) {
    TrainConfig c = base;
    if (axis == "layers") {
      if (v != static_cast<double>(static_cast<std::int32_t>(v))) throw UsageError("layer counts must be integers");
      c.student.layers = static_cast<std::int32_t>(v);
    } else {
      c.alpha = v;
    }
    c.validate();
    settings.push_back(c);
  }

  const json config = {{"axis", axis}, {"values", values}, {"base", base.to_json()}, {"qps", !a.no_qps}};
  RunManifest m;
  m.command = "sweep";
  m.config = config;
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, config, inputs);

  const fs::path dir = a.student.out;
  ensure_dir(dir);
  const auto results_path = dir / "results.csv";
  std::error_code ec;
  fs::remove(results_path, ec);
  const auto test_pairs = encode_dataset(data.test, data.vocab, base.student.pair_options());
  out << kResultsHeader << '\n';
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const auto& c = settings[i];
    const std::string name = axis + "-" + format_value(values[i]);
    StudentRun run{train_mkdm(data.train, train_cache ? &*train_cache : nullptr, data.val, data.vocab, c), c, {}};
    run.test = evaluate_student(run.result.model, data.test, data.vocab,
                                aggregation_policy(c, run.result.model.n_teachers()), c.eval_batch_size);
    ResultRow row{m.run_id + "/" + name, c.student.layers, c.alpha, to_string(c.mode), run.test.acc, run.test.auc,
                  std::nullopt};
    if (!a.no_qps) {
      QpsOptions q;
      q.min_duration_seconds = a.qps_seconds;
      q.repetitions = a.qps_reps;
      run.test.qps = benchmark_student(run.result.model, test_pairs, q);
      row.qps = run.test.qps->mean;
    }
    const auto sub = dir / name;
    ensure_dir(sub);
    write_student_outputs(sub, run, m, {{"setting", {{axis, values[i]}}}});
    append_result_row(results_path, row);
    out << format_result_row(row) << '\n';
  }
  m.outputs.push_back(results_path);
  finish_manifest(m, dir / "manifest.json", clock);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string results;
  std::string out;
  std::int64_t batch_size = 1;
  std::int64_t warmup = 20;
  double seconds = 1.0;
  std::int32_t reps = 3;
};

int bench(const BenchArgs& a, std::ostream& out) {
  const Stopwatch clock;
  const auto ckpt = load_checkpoint(a.model);
  const auto data = load_data_dir(a.data);
  std::vector<fs::path> inputs = {a.model};
  inputs.insert(inputs.end(), data.files.begin(), data.files.end());
  const auto& split = data.split(a.split);
  if (split.empty()) throw DataError(DataError::Kind::malformed, "split '" + a.split + "' is empty");

  QpsOptions q;
  q.batch_size = a.batch_size;
  q.warmup_batches = a.warmup;
  q.min_duration_seconds = a.seconds;
  q.repetitions = a.reps;
  if (q.batch_size < 1 || q.repetitions < 1 || !(q.min_duration_seconds > 0.0) || q.warmup_batches < 0) {
    throw UsageError("bench needs batch size >= 1, repetitions >= 1, seconds > 0 and warmup >= 0");
  }

  const auto kind = checkpoint_kind(ckpt);
  const auto encoder = checkpoint_encoder_config(ckpt);
  const auto pairs = encode_dataset(split, data.vocab, encoder.pair_options());
  ResultRow row;
  row.layers = encoder.layers;
  EvalReport report;
  if (kind == "teacher") {
    auto model = teacher_from_checkpoint(ckpt);
    if (model.vocab_fingerprint != data.vocab.fingerprint()) {
      throw DataError(DataError::Kind::mismatch, "the checkpoint was trained with a different vocabulary");
    }
    report = evaluate(predict_scores(model, pairs), split.labels());
    report.qps = benchmark_teacher(model, pairs, q);
    row.mode = "teacher";
  } else {
    auto model = student_from_checkpoint(ckpt);
    TrainConfig train;
    const auto& run = ckpt.config.value("run", json::object());
    if (run.contains("train")) train = TrainConfig::from_json(run.at("train"));
    report = evaluate_student(model, split, data.vocab, aggregation_policy(train, model.n_teachers()));
    report.qps = benchmark_student(model, pairs, q);
    row.alpha = train.alpha;
    row.mode = to_string(train.mode);
  }
  row.acc = report.acc;
  row.auc = report.auc;
  row.qps = report.qps->mean;

  const json config = {{"split", a.split},
                       {"batch_size", q.batch_size},
                       {"warmup_batches", q.warmup_batches},
                       {"min_duration_seconds", q.min_duration_seconds},
                       {"repetitions", q.repetitions}};
  RunManifest m;
  m.command = "bench";
  m.config = config;
  m.inputs = inputs;
  m.run_id = make_run_id(m.command, config, inputs);
  row.run_id = m.run_id;

  out << report.to_json().dump(2) << '\n';
  std::optional<fs::path> manifest_path;
  if (!a.results.empty()) {
    append_result_row(a.results, row);
    m.outputs.push_back(a.results);
    manifest_path = fs::path(a.results + ".manifest.json");
  }
  if (!a.out.empty()) {
    write_json(a.out, report.to_json());
    m.outputs.push_back(a.out);
    manifest_path = fs::path(a.out + ".manifest.json");
  }
  if (manifest_path) finish_manifest(m, *manifest_path, clock);
  return kExitOk;
}

// ---------------------------------------------------------------------------

void add_student_options(CLI::App* cmd, StudentArgs& a, bool with_mode) {
  cmd->add_option("--data", a.data, "Data directory written by gen-data")->required();
  cmd->add_option("--cache", a.cache, "Soft-label cache covering the training split");
  cmd->add_option("--config", a.config, "Training config (JSON)");
  cmd->add_option("--out", a.out, "Output directory")->required();
  if (with_mode) cmd->add_option("--mode", a.mode, "mkdm | single | gold-only");
  cmd->add_option("--alpha", a.alpha, "Loss weighted ratio");
  cmd->add_option("--lr", a.lr, "Learning rate");
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_option("--layers", a.layers, "Student transformer layers");
  cmd->add_option("--epochs", a.epochs, "Training epochs");
  cmd->add_option("--teacher", a.teachers, "Cache column to distil from (repeatable)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task knowledge distillation for question-passage relevance"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic relevance corpus");
  gen_cmd->add_option("--spec", gen.spec, "Synthetic spec (JSON); defaults when omitted");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--split", gen.split, "train,val,test fractions");
  gen_cmd->add_option("--vocab-size", gen.vocab_size, "Word-piece vocabulary size (0: lexicon + headroom)");

  TrainTeachersArgs tt;
  auto* tt_cmd = app.add_subcommand("train-teachers", "Train the teacher zoo");
  tt_cmd->add_option("--data", tt.data, "Data directory")->required();
  tt_cmd->add_option("--zoo", tt.zoo, "Zoo config (JSON); the three-teacher default when omitted");
  tt_cmd->add_option("--out", tt.out, "Output directory")->required();
  tt_cmd->add_option("--seed", tt.seed, "Base seed of the default zoo");
  tt_cmd->add_option("--epochs", tt.epochs, "Override every teacher's epochs");

  LabelArgs lab;
  auto* label_cmd = app.add_subcommand("label", "Score a split with every teacher into a soft-label cache");
  label_cmd->add_option("--teachers", lab.teachers, "Directory of teacher checkpoints")->required();
  label_cmd->add_option("--data", lab.data, "Data directory")->required();
  label_cmd->add_option("--out", lab.out, "Cache file to write")->required();
  label_cmd->add_option("--split", lab.split, "train | val | test | unlabeled | all");

  StudentArgs dist;
  auto* distill_cmd = app.add_subcommand("distill", "Train a student on golden and soft labels");
  add_student_options(distill_cmd, dist, true);
  distill_cmd->add_option("--init", dist.init, "Checkpoint whose bottom layers initialise the student");

  StudentArgs pre;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Two-stage training, stage 1: soft labels on unlabeled pairs");
  add_student_options(pretrain_cmd, pre, false);

  StudentArgs fine;
  auto* finetune_cmd = app.add_subcommand("finetune", "Two-stage training, stage 2: continue from a stage-1 student");
  add_student_options(finetune_cmd, fine, true);
  finetune_cmd->add_option("--init", fine.init, "Stage-1 student checkpoint")->required();

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train one student per setting and tabulate acc, auc and QPS");
  add_student_options(sweep_cmd, sw.student, true);
  sweep_cmd->add_option("--axis", sw.axis, "layers:1,3,5,7,9 or alpha:0.1,0.3,...")->required();
  sweep_cmd->add_flag("--no-qps", sw.no_qps, "Skip the throughput measurement");
  sweep_cmd->add_option("--qps-seconds", sw.qps_seconds, "Minimum seconds per QPS repetition");
  sweep_cmd->add_option("--qps-reps", sw.qps_reps, "QPS repetitions");

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Measure inference QPS of a checkpoint");
  bench_cmd->add_option("--model", be.model, "Student or teacher checkpoint")->required();
  bench_cmd->add_option("--data", be.data, "Data directory")->required();
  bench_cmd->add_option("--split", be.split, "Split to score and time");
  bench_cmd->add_option("--results", be.results, "Results CSV to append a row to");
  bench_cmd->add_option("--out", be.out, "Report JSON to write");
  bench_cmd->add_option("--batch-size", be.batch_size, "Examples per forward pass");
  bench_cmd->add_option("--warmup", be.warmup, "Warm-up batches");
  bench_cmd->add_option("--seconds", be.seconds, "Minimum seconds per repetition");
  bench_cmd->add_option("--reps", be.reps, "Repetitions");

  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.push_back("mkdm");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return gen_data(gen, out);
    if (*tt_cmd) return train_teachers(tt, out, err);
    if (*label_cmd) return label(lab, out);
    if (*distill_cmd) return distill(dist, out);
    if (*pretrain_cmd) return pretrain(pre, out);
    if (*finetune_cmd) return finetune(fine, out);
    if (*sweep_cmd) return sweep(sw, out);
    if (*bench_cmd) return bench(be, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MetricError& e) {
    err << "metric error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mkdm::cli

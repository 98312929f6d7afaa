#include "mkdm/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "io_util.hpp"
#include "mkdm/error.hpp"
#include "mkdm/rng.hpp"
#include "mkdm/soft_labels.hpp"

namespace mkdm {
namespace {

constexpr std::string_view kLabeledHeader = "id\tquestion\tpassage\tlabel";
constexpr std::string_view kUnlabeledHeader = "id\tquestion\tpassage";

struct Lexicon {
  std::vector<std::vector<std::string>> topic_words;
  std::vector<std::string> filler;
};

// Pronounceable distinct words, so that word pieces share prefixes and suffixes.
Lexicon make_lexicon(const SyntheticSpec& spec) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  Rng rng(derive_seed(spec.seed, "synthetic.lexicon"));
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  while (static_cast<std::int32_t>(words.size()) < spec.vocab_size) {
    const auto syllables = rng.uniform_int(2, 4);
    std::string w;
    for (std::int64_t s = 0; s < syllables; ++s) {
      w += consonants[static_cast<std::size_t>(rng.uniform_int(0, consonants.size() - 1))];
      w += vowels[static_cast<std::size_t>(rng.uniform_int(0, vowels.size() - 1))];
    }
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  Lexicon lex;
  const auto per_topic = static_cast<std::size_t>(spec.keywords_per_topic());
  std::size_t next = 0;
  for (std::int32_t t = 0; t < spec.topics; ++t) {
    lex.topic_words.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(next),
                                 words.begin() + static_cast<std::ptrdiff_t>(next + per_topic));
    next += per_topic;
  }
  lex.filler.assign(words.begin() + static_cast<std::ptrdiff_t>(next), words.end());
  return lex;
}

template <typename V>
const auto& pick(Rng& rng, const V& v) {
  return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(v.size()) - 1))];
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// One question/passage pair whose overlap is ≥ k for positives and ≤ max_distractors otherwise.
std::pair<std::string, std::string> make_pair_text(const SyntheticSpec& spec, const Lexicon& lex, Rng& rng,
                                                   bool positive) {
  const auto topic = rng.uniform_int(0, spec.topics - 1);
  const auto& keywords = lex.topic_words[static_cast<std::size_t>(topic)];
  const auto q_len = rng.uniform_int(spec.question_min, spec.question_max);
  const auto p_len = rng.uniform_int(spec.passage_min, spec.passage_max);

  std::vector<std::string> pool = keywords;
  rng.shuffle(pool);
  std::vector<std::string> question(pool.begin(), pool.begin() + q_len);
  const std::vector<std::string> rest(pool.begin() + q_len, pool.end());  // topic words outside the question

  std::int64_t shared;
  const std::vector<std::string>* context;
  if (positive) {
    shared = rng.uniform_int(spec.overlap_k, std::min(q_len, p_len));
    context = &rest;
  } else {
    shared = rng.uniform_int(0, std::min<std::int64_t>(spec.max_distractors(), q_len));
    if (rng.bernoulli(spec.same_topic_negative_rate)) {
      context = &rest;
    } else {
      auto other = rng.uniform_int(0, spec.topics - 2);
      if (other >= topic) ++other;
      context = &lex.topic_words[static_cast<std::size_t>(other)];
    }
  }

  std::vector<std::string> qwords = question;
  rng.shuffle(qwords);
  std::vector<std::string> passage(qwords.begin(), qwords.begin() + shared);
  while (static_cast<std::int64_t>(passage.size()) < p_len) {
    passage.push_back(rng.bernoulli(0.5) ? pick(rng, *context) : pick(rng, lex.filler));
  }
  rng.shuffle(passage);
  return {join(question), join(passage)};
}

std::string make_id(char prefix, std::int64_t index, std::int64_t total) {
  const auto width = std::max<std::size_t>(6, std::to_string(total).size());
  std::string digits = std::to_string(index);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

void check_field(std::string_view field, std::string_view name, const std::string& id) {
  if (field.find_first_of("\t\n\r") != std::string_view::npos) {
    throw DataError(DataError::Kind::malformed, std::string(name) + " of '" + id + "' contains a tab or newline");
  }
}

std::string list_ids(const std::vector<std::string>& ids) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > shown) out += ", … (" + std::to_string(ids.size()) + " total)";
  return out;
}

}  // namespace

std::vector<std::int32_t> Dataset::labels() const {
  std::vector<std::int32_t> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    if (!e.gold) throw DataError(DataError::Kind::bad_label, "example '" + e.id + "' has no gold label");
    out.push_back(*e.gold);
  }
  return out;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.id);
  return out;
}

std::vector<std::string> Dataset::texts() const {
  std::vector<std::string> out;
  out.reserve(examples.size() * 2);
  for (const auto& e : examples) {
    out.push_back(e.question);
    out.push_back(e.passage);
  }
  return out;
}

std::int32_t SyntheticSpec::keywords_per_topic() const {
  if (topics < 1) return 0;
  return static_cast<std::int32_t>(std::floor(vocab_size * keyword_fraction / topics));
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synthetic spec: " + msg); };
  if (size < 1) fail("size must be >= 1");
  if (unlabeled_size < 0) fail("unlabeled_size must be >= 0");
  if (topics < 2) fail("need at least 2 topics");
  if (!(keyword_fraction > 0.0 && keyword_fraction < 1.0)) fail("keyword_fraction must lie in (0, 1)");
  if (question_min < 1 || question_max < question_min) fail("invalid question length range");
  if (passage_min < 1 || passage_max < passage_min) fail("invalid passage length range");
  if (overlap_k < 1) fail("overlap_k must be >= 1");
  if (overlap_k > question_min) fail("overlap_k exceeds the minimum question length");
  if (overlap_k > passage_min) fail("overlap_k exceeds the minimum passage length");
  if (max_distractors() >= overlap_k) fail("distractor_overlap must be below overlap_k");
  if (!(noise >= 0.0 && noise < 0.5)) fail("noise must lie in [0, 0.5)");
  if (!(same_topic_negative_rate >= 0.0 && same_topic_negative_rate <= 1.0)) {
    fail("same_topic_negative_rate must lie in [0, 1]");
  }
  if (keywords_per_topic() <= question_max) fail("too few keywords per topic for the longest question");
  if (vocab_size - keywords_per_topic() * topics < 1) fail("no filler words left");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"vocab_size", vocab_size},
          {"topics", topics},
          {"keyword_fraction", keyword_fraction},
          {"question_min", question_min},
          {"question_max", question_max},
          {"passage_min", passage_min},
          {"passage_max", passage_max},
          {"overlap_k", overlap_k},
          {"distractor_overlap", distractor_overlap},
          {"same_topic_negative_rate", same_topic_negative_rate},
          {"noise", noise},
          {"size", size},
          {"unlabeled_size", unlabeled_size},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  const auto known = s.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("synthetic spec: unknown field '" + key + "'");
  }
  try {
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.topics = j.value("topics", s.topics);
    s.keyword_fraction = j.value("keyword_fraction", s.keyword_fraction);
    s.question_min = j.value("question_min", s.question_min);
    s.question_max = j.value("question_max", s.question_max);
    s.passage_min = j.value("passage_min", s.passage_min);
    s.passage_max = j.value("passage_max", s.passage_max);
    s.overlap_k = j.value("overlap_k", s.overlap_k);
    s.distractor_overlap = j.value("distractor_overlap", s.distractor_overlap);
    s.same_topic_negative_rate = j.value("same_topic_negative_rate", s.same_topic_negative_rate);
    s.noise = j.value("noise", s.noise);
    s.size = j.value("size", s.size);
    s.unlabeled_size = j.value("unlabeled_size", s.unlabeled_size);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Lexicon lex = make_lexicon(spec);
  Rng label_rng(derive_seed(spec.seed, "synthetic.labels"));
  std::int64_t positives = spec.size / 2;
  if (spec.size % 2 == 1 && label_rng.bernoulli(0.5)) ++positives;
  std::vector<std::int32_t> clean(static_cast<std::size_t>(spec.size), 0);
  std::fill(clean.begin(), clean.begin() + positives, 1);
  label_rng.shuffle(clean);

  Rng text_rng(derive_seed(spec.seed, "synthetic.text"));
  Dataset ds;
  ds.examples.reserve(clean.size());
  for (std::int64_t i = 0; i < spec.size; ++i) {
    auto [q, p] = make_pair_text(spec, lex, text_rng, clean[static_cast<std::size_t>(i)] == 1);
    ds.examples.push_back({make_id('s', i, spec.size), std::move(q), std::move(p), clean[static_cast<std::size_t>(i)], {}});
  }

  // Equal flip counts per class keep the balance exact.
  Rng noise_rng(derive_seed(spec.seed, "synthetic.noise"));
  const auto flips = static_cast<std::size_t>(std::llround(spec.noise * static_cast<double>(spec.size) / 2.0));
  for (std::int32_t cls : {1, 0}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (clean[i] == cls) members.push_back(i);
    }
    noise_rng.shuffle(members);
    for (std::size_t f = 0; f < std::min(flips, members.size()); ++f) ds.examples[members[f]].gold = 1 - cls;
  }
  return ds;
}

Dataset generate_unlabeled(const SyntheticSpec& spec, std::int64_t count) {
  spec.validate();
  if (count < 1) throw ConfigError("unlabeled count must be >= 1");
  const Lexicon lex = make_lexicon(spec);
  Rng rng(derive_seed(spec.seed, "synthetic.unlabeled"));
  Dataset ds;
  ds.labeled = false;
  for (std::int64_t i = 0; i < count; ++i) {
    auto [q, p] = make_pair_text(spec, lex, rng, rng.bernoulli(0.5));
    ds.examples.push_back({make_id('u', i, count), std::move(q), std::move(p), std::nullopt, {}});
  }
  return ds;
}

std::int32_t word_overlap(std::string_view question, std::string_view passage) {
  const auto q = split_words(question);
  const auto p = split_words(passage);
  const std::set<std::string> qs(q.begin(), q.end());
  std::set<std::string> shared;
  for (const auto& w : p) {
    if (qs.count(w)) shared.insert(w);
  }
  return static_cast<std::int32_t>(shared.size());
}

std::string to_tsv(const Dataset& ds) {
  std::string out(ds.labeled ? kLabeledHeader : kUnlabeledHeader);
  out += '\n';
  for (const auto& e : ds.examples) {
    if (e.id.empty()) throw DataError(DataError::Kind::malformed, "example with empty id");
    check_field(e.id, "id", e.id);
    check_field(e.question, "question", e.id);
    check_field(e.passage, "passage", e.id);
    out += e.id + '\t' + e.question + '\t' + e.passage;
    if (ds.labeled) {
      if (!e.gold || (*e.gold != 0 && *e.gold != 1)) {
        throw DataError(DataError::Kind::bad_label, "example '" + e.id + "' lacks a 0/1 label");
      }
      out += '\t';
      out += static_cast<char>('0' + *e.gold);
    }
    out += '\n';
  }
  return out;
}

Dataset parse_tsv(std::string_view content) {
  using Kind = DataError::Kind;
  const auto rows = io::lines(content);
  if (rows.empty()) throw DataError(Kind::malformed, "missing header", 1);
  Dataset ds;
  if (rows[0] == kLabeledHeader) {
    ds.labeled = true;
  } else if (rows[0] == kUnlabeledHeader) {
    ds.labeled = false;
  } else {
    throw DataError(Kind::malformed, "unexpected header '" + std::string(rows[0]) + "'", 1);
  }
  const std::size_t columns = ds.labeled ? 4 : 3;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t line = i + 1;
    const auto fields = io::split(rows[i], '\t');
    if (fields.size() != columns) {
      throw DataError(Kind::column_count,
                      "expected " + std::to_string(columns) + " columns, found " + std::to_string(fields.size()), line);
    }
    Example e{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), std::nullopt, {}};
    if (e.id.empty()) throw DataError(Kind::malformed, "empty id", line);
    if (!seen.insert(e.id).second) throw DataError(Kind::duplicate_id, "duplicate id '" + e.id + "'", line);
    if (ds.labeled) {
      if (fields[3] != "0" && fields[3] != "1") {
        throw DataError(Kind::bad_label, "label must be 0 or 1, got '" + std::string(fields[3]) + "'", line);
      }
      e.gold = fields[3] == "1" ? 1 : 0;
    }
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

void save_tsv(const Dataset& dataset, const std::filesystem::path& path) { io::write_file(path, to_tsv(dataset)); }

Dataset load_tsv(const std::filesystem::path& path) { return parse_tsv(io::read_file(path)); }

Dataset attach_soft_labels(const Dataset& dataset, const SoftLabelCache& cache) {
  std::vector<std::string> missing;
  std::unordered_set<std::string> ids;
  Dataset out = dataset;
  for (auto& e : out.examples) {
    ids.insert(e.id);
    if (const auto* row = cache.find(e.id)) {
      e.soft = *row;
    } else {
      missing.push_back(e.id);
    }
  }
  std::vector<std::string> extra;
  for (const auto& id : cache.example_ids()) {
    if (!ids.count(id)) extra.push_back(id);
  }
  if (!missing.empty()) {
    throw DataError(DataError::Kind::missing_id, "soft-label cache lacks ids: " + list_ids(missing));
  }
  if (!extra.empty()) {
    throw DataError(DataError::Kind::extra_id, "soft-label cache has ids not in the dataset: " + list_ids(extra));
  }
  return out;
}

std::vector<Dataset> split_dataset(const Dataset& dataset, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.empty()) throw ConfigError("split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);

  std::vector<Dataset> parts;
  double cumulative = 0.0;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    cumulative += fractions[k];
    const std::size_t end = k + 1 == fractions.size()
                                ? order.size()
                                : static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(order.size())));
    Dataset part;
    part.labeled = dataset.labeled;
    for (std::size_t i = begin; i < std::max(begin, end); ++i) part.examples.push_back(dataset.examples[order[i]]);
    parts.push_back(std::move(part));
    begin = std::max(begin, end);
  }
  return parts;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 std::int64_t epoch, bool shuffle) {
  if (n == 0) throw DataError(DataError::Kind::malformed, "cannot batch an empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(derive_seed(seed, "epoch." + std::to_string(epoch)));
    rng.shuffle(order);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return batches;
}

std::vector<EncodedPair> encode_dataset(const Dataset& dataset, const Vocabulary& vocab, const PairOptions& options) {
  std::vector<EncodedPair> out;
  out.reserve(dataset.size());
  for (const auto& e : dataset.examples) out.push_back(encode_pair(e.question, e.passage, vocab, options));
  return out;
}

}  // namespace mkdm

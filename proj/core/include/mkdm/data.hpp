#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mkdm/text.hpp"

namespace mkdm {

class SoftLabelCache;

/// One ⟨question, passage⟩ pair.
struct Example {
  std::string id;
  std::string question;
  std::string passage;
  std::optional<std::int32_t> gold;  // absent for unlabeled pairs
  std::vector<float> soft;           // teacher scores once attached

  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  std::vector<Example> examples;
  bool labeled = true;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  /// Gold labels in row order. Throws DataError when the set is unlabeled.
  std::vector<std::int32_t> labels() const;
  std::vector<std::string> ids() const;
  /// Question and passage text of every example, for vocabulary building.
  std::vector<std::string> texts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Parameters of the synthetic relevance corpus.
///
/// Every topic owns a disjoint keyword set; the rest of the lexicon is filler.
/// Questions are drawn from one topic's keywords. A positive passage contains
/// at least `overlap_k` distinct question words; a negative passage contains at
/// most `distractor_overlap` (< k) of them and otherwise draws from another
/// topic, or from the question's own topic with probability
/// `same_topic_negative_rate`.
struct SyntheticSpec {
  std::int32_t vocab_size = 2000;
  std::int32_t topics = 20;
  double keyword_fraction = 0.5;
  std::int32_t question_min = 4;
  std::int32_t question_max = 8;
  std::int32_t passage_min = 20;
  std::int32_t passage_max = 40;
  std::int32_t overlap_k = 2;
  std::int32_t distractor_overlap = -1;  // -1: k − 1
  double same_topic_negative_rate = 0.0;
  double noise = 0.05;
  std::int64_t size = 20000;
  std::int64_t unlabeled_size = 0;
  std::uint64_t seed = 1;

  std::int32_t keywords_per_topic() const;
  std::int32_t max_distractors() const { return distractor_overlap < 0 ? overlap_k - 1 : distractor_overlap; }

  /// Throws ConfigError on incompatible ranges.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static SyntheticSpec from_json(const nlohmann::json& j);
};

/// Balanced labeled corpus (positives = ⌊size/2⌋ or ⌈size/2⌉). Labels are then
/// flipped on round(noise·size/2) examples of each class, so the balance holds
/// exactly and each label flips with marginal probability `noise`.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// `count` pairs from the same lexicon and generator, labels withheld.
Dataset generate_unlabeled(const SyntheticSpec& spec, std::int64_t count);

/// Number of distinct whitespace-separated words shared by question and passage.
std::int32_t word_overlap(std::string_view question, std::string_view passage);

/// Header `id  question  passage  label` (tab-separated); the unlabeled form omits label.
std::string to_tsv(const Dataset& dataset);
Dataset parse_tsv(std::string_view content);
void save_tsv(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_tsv(const std::filesystem::path& path);

/// Joins cache rows onto examples by id. Throws DataError listing missing
/// and extra ids.
Dataset attach_soft_labels(const Dataset& dataset, const SoftLabelCache& cache);

/// Shuffles with `seed` and cuts into consecutive parts of the given
/// fractions (which must sum to 1).
std::vector<Dataset> split_dataset(const Dataset& dataset, std::span<const double> fractions, std::uint64_t seed);

/// Row indices of each batch for one epoch. The permutation depends only on
/// (seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 std::int64_t epoch, bool shuffle);

std::vector<EncodedPair> encode_dataset(const Dataset& dataset, const Vocabulary& vocab, const PairOptions& options);

}  // namespace mkdm

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mkdm {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kClsId = 2;
inline constexpr std::int32_t kSepId = 3;
inline constexpr std::int32_t kReservedCount = 4;

/// Word-piece vocabulary. Ids are dense in [0, size) with [PAD], [UNK],
/// [CLS], [SEP] fixed at 0..3; continuation pieces carry a "##" prefix.
class Vocabulary {
 public:
  /// Reserved tokens only.
  Vocabulary();

  /// Throws DataError unless the reserved tokens lead and pieces are unique.
  static Vocabulary from_pieces(std::vector<std::string> pieces);

  /// One piece per line, line number = id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::int32_t size() const noexcept { return static_cast<std::int32_t>(pieces_.size()); }
  const std::vector<std::string>& pieces() const noexcept { return pieces_; }
  const std::string& piece(std::int32_t id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::optional<std::int32_t> find(std::string_view piece) const;
  bool contains(std::string_view piece) const { return find(piece).has_value(); }

  /// Stable content hash, used to detect tokenizer mismatches.
  std::string fingerprint() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.pieces_ == b.pieces_; }

 private:
  Vocabulary(std::vector<std::string> pieces, int);

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Lowercases ASCII letters and splits on whitespace.
std::vector<std::string> split_words(std::string_view text);

/// Frequency-ranked whole words (ties broken lexicographically), then
/// single-character and "##"-continuation fallback pieces while room remains.
/// Throws ContractError when target_size < 5.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size);

/// Greedy longest-match-first segmentation of one lowercase word.
/// Falls back to a single [UNK] when no full segmentation exists.
std::vector<std::string> tokenize_word(std::string_view word, const Vocabulary& vocab);

/// split_words followed by tokenize_word on each word.
std::vector<std::string> tokenize(std::string_view text, const Vocabulary& vocab);

/// Joins pieces back into space-separated words, gluing "##" continuations.
std::string detokenize(std::span<const std::string> pieces);

std::vector<std::int32_t> piece_ids(std::span<const std::string> pieces, const Vocabulary& vocab);

struct PairOptions {
  std::int32_t max_len = 64;
  /// Appends [SEP] after the passage, as BERT does. Off: length is m + n + 2.
  bool trailing_sep = false;
};

/// ⟨question, passage⟩ laid out as [CLS] q… [SEP] p… followed by padding.
struct EncodedPair {
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> segment_ids;
  std::vector<std::int32_t> position_ids;
  std::vector<std::uint8_t> attention_mask;
  std::int32_t question_pieces = 0;  // after truncation
  std::int32_t passage_pieces = 0;   // after truncation

  std::int32_t unpadded_length() const;
};

/// Assembles a pair, truncating the longer side one piece at a time (passage
/// on ties) until it fits in max_len. Throws ContractError when both sides are
/// empty or max_len < 4.
EncodedPair assemble_pair(std::span<const std::int32_t> question, std::span<const std::int32_t> passage,
                          const PairOptions& options);

EncodedPair encode_pair(std::string_view question, std::string_view passage, const Vocabulary& vocab,
                        const PairOptions& options);

/// Pairs stacked row-major and cropped to the longest unpadded length among them.
struct EncodedBatch {
  std::int64_t batch = 0;
  std::int64_t seq_len = 0;
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> segment_ids;
  std::vector<std::int32_t> position_ids;
  std::vector<std::uint8_t> attention_mask;

  static EncodedBatch from_pairs(std::span<const EncodedPair* const> pairs);
  static EncodedBatch from_pair(const EncodedPair& pair);
  /// Keeps the full padded length instead of cropping.
  static EncodedBatch padded(const EncodedPair& pair);
};

}  // namespace mkdm

#include "mkdm/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "mkdm/error.hpp"
#include "mkdm/rng.hpp"

namespace mkdm {
namespace {

const std::vector<std::string>& reserved_pieces() {
  static const std::vector<std::string> pieces = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  return pieces;
}

constexpr std::string_view kContinuation = "##";
constexpr std::size_t kMaxWordBytes = 100;

// Byte offsets of UTF-8 code point starts in `word`, plus word.size().
std::vector<std::size_t> char_boundaries(std::string_view word) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    const auto c = static_cast<unsigned char>(word[i]);
    if ((c & 0xC0) != 0x80) out.push_back(i);
  }
  out.push_back(word.size());
  return out;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(from_pieces(reserved_pieces())) {}

Vocabulary::Vocabulary(std::vector<std::string> pieces, int) : pieces_(std::move(pieces)) {
  index_.reserve(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw DataError(DataError::Kind::malformed, "empty vocabulary piece", i + 1);
    if (!index_.emplace(pieces_[i], static_cast<std::int32_t>(i)).second) {
      throw DataError(DataError::Kind::duplicate_id, "duplicate vocabulary piece '" + pieces_[i] + "'", i + 1);
    }
  }
}

Vocabulary Vocabulary::from_pieces(std::vector<std::string> pieces) {
  const auto& reserved = reserved_pieces();
  if (pieces.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), pieces.begin())) {
    throw DataError(DataError::Kind::malformed, "vocabulary must start with [PAD] [UNK] [CLS] [SEP]");
  }
  return Vocabulary(std::move(pieces), 0);
}

std::optional<std::int32_t> Vocabulary::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a("vocab");
  for (const auto& p : pieces_) {
    h = fnv1a(p, h);
    h = fnv1a("\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::io, "cannot open vocabulary " + path.string());
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pieces.push_back(line);
  }
  return from_pieces(std::move(pieces));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataError::Kind::io, "cannot write vocabulary " + path.string());
  for (const auto& p : pieces_) out << p << '\n';
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size) {
  if (target_size < static_cast<std::size_t>(kReservedCount) + 1) {
    throw ContractError("build_vocab: target size must be at least 5, got " + std::to_string(target_size));
  }
  std::map<std::string, std::int64_t> word_counts;
  std::map<std::string, std::int64_t> char_counts;
  for (const auto& line : corpus) {
    for (auto& word : split_words(line)) {
      if (word.size() > kMaxWordBytes) continue;
      const auto bounds = char_boundaries(word);
      for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        std::string piece = word.substr(bounds[i], bounds[i + 1] - bounds[i]);
        char_counts[i == 0 ? piece : std::string(kContinuation) + piece] += 1;
      }
      word_counts[std::move(word)] += 1;
    }
  }

  auto ranked = [](const std::map<std::string, std::int64_t>& counts) {
    std::vector<std::pair<std::string, std::int64_t>> v(counts.begin(), counts.end());
    // map order is lexicographic, so a stable sort by count keeps that as the tie-break
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return v;
  };

  std::vector<std::string> pieces = reserved_pieces();
  std::set<std::string> seen(pieces.begin(), pieces.end());
  auto take = [&](const std::vector<std::pair<std::string, std::int64_t>>& candidates) {
    for (const auto& [piece, count] : candidates) {
      if (pieces.size() >= target_size) return;
      if (seen.insert(piece).second) pieces.push_back(piece);
    }
  };
  take(ranked(word_counts));
  take(ranked(char_counts));
  return Vocabulary::from_pieces(std::move(pieces));
}

std::vector<std::string> tokenize_word(std::string_view word, const Vocabulary& vocab) {
  static const std::vector<std::string> unknown = {"[UNK]"};
  if (word.empty()) return {};
  if (word.size() > kMaxWordBytes) return unknown;
  const auto bounds = char_boundaries(word);
  std::vector<std::string> out;
  std::size_t start = 0;  // index into bounds
  while (bounds[start] < word.size()) {
    std::size_t end = bounds.size() - 1;
    std::string match;
    for (; end > start; --end) {
      std::string candidate(word.substr(bounds[start], bounds[end] - bounds[start]));
      if (start > 0) candidate.insert(0, kContinuation);
      if (vocab.contains(candidate)) {
        match = std::move(candidate);
        break;
      }
    }
    if (end == start) return unknown;
    out.push_back(std::move(match));
    start = end;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& word : split_words(text)) {
    auto pieces = tokenize_word(word, vocab);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()), std::make_move_iterator(pieces.end()));
  }
  return out;
}

std::string detokenize(std::span<const std::string> pieces) {
  std::string out;
  for (const auto& p : pieces) {
    if (p.starts_with(kContinuation)) {
      out += p.substr(kContinuation.size());
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

std::vector<std::int32_t> piece_ids(std::span<const std::string> pieces, const Vocabulary& vocab) {
  std::vector<std::int32_t> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(vocab.find(p).value_or(kUnkId));
  return ids;
}

std::int32_t EncodedPair::unpadded_length() const {
  return static_cast<std::int32_t>(std::count(attention_mask.begin(), attention_mask.end(), std::uint8_t{1}));
}

EncodedPair assemble_pair(std::span<const std::int32_t> question, std::span<const std::int32_t> passage,
                          const PairOptions& options) {
  if (options.max_len < 4) throw ContractError("assemble_pair: max_len must be at least 4");
  if (question.empty() && passage.empty()) throw ContractError("assemble_pair: question and passage are both empty");
  const std::size_t specials = options.trailing_sep ? 3 : 2;
  std::size_t m = question.size(), n = passage.size();
  while (m + n + specials > static_cast<std::size_t>(options.max_len)) {
    if (m > n) {
      --m;
    } else {
      --n;
    }
  }

  const auto len = static_cast<std::size_t>(options.max_len);
  EncodedPair pair;
  pair.token_ids.assign(len, kPadId);
  pair.segment_ids.assign(len, 0);
  pair.position_ids.resize(len);
  pair.attention_mask.assign(len, 0);
  for (std::size_t i = 0; i < len; ++i) pair.position_ids[i] = static_cast<std::int32_t>(i);

  std::size_t t = 0;
  auto put = [&](std::int32_t id, std::int32_t segment) {
    pair.token_ids[t] = id;
    pair.segment_ids[t] = segment;
    pair.attention_mask[t] = 1;
    ++t;
  };
  put(kClsId, 0);
  for (std::size_t i = 0; i < m; ++i) put(question[i], 0);
  put(kSepId, 0);
  for (std::size_t i = 0; i < n; ++i) put(passage[i], 1);
  if (options.trailing_sep) put(kSepId, 1);
  pair.question_pieces = static_cast<std::int32_t>(m);
  pair.passage_pieces = static_cast<std::int32_t>(n);
  return pair;
}

EncodedPair encode_pair(std::string_view question, std::string_view passage, const Vocabulary& vocab,
                        const PairOptions& options) {
  const auto q = piece_ids(tokenize(question, vocab), vocab);
  const auto p = piece_ids(tokenize(passage, vocab), vocab);
  return assemble_pair(q, p, options);
}

namespace {

EncodedBatch stack(std::span<const EncodedPair* const> pairs, std::int64_t seq_len) {
  EncodedBatch batch;
  batch.batch = static_cast<std::int64_t>(pairs.size());
  batch.seq_len = seq_len;
  const auto total = static_cast<std::size_t>(batch.batch * seq_len);
  batch.token_ids.reserve(total);
  batch.segment_ids.reserve(total);
  batch.position_ids.reserve(total);
  batch.attention_mask.reserve(total);
  for (const auto* p : pairs) {
    if (static_cast<std::int64_t>(p->token_ids.size()) < seq_len) {
      throw ContractError("EncodedBatch: pair shorter than batch length");
    }
    const auto end = static_cast<std::ptrdiff_t>(seq_len);
    batch.token_ids.insert(batch.token_ids.end(), p->token_ids.begin(), p->token_ids.begin() + end);
    batch.segment_ids.insert(batch.segment_ids.end(), p->segment_ids.begin(), p->segment_ids.begin() + end);
    batch.position_ids.insert(batch.position_ids.end(), p->position_ids.begin(), p->position_ids.begin() + end);
    batch.attention_mask.insert(batch.attention_mask.end(), p->attention_mask.begin(),
                                p->attention_mask.begin() + end);
  }
  return batch;
}

}  // namespace

EncodedBatch EncodedBatch::from_pairs(std::span<const EncodedPair* const> pairs) {
  if (pairs.empty()) throw ContractError("EncodedBatch: no pairs");
  std::int64_t longest = 0;
  for (const auto* p : pairs) longest = std::max<std::int64_t>(longest, p->unpadded_length());
  return stack(pairs, longest);
}

EncodedBatch EncodedBatch::from_pair(const EncodedPair& pair) {
  const EncodedPair* ptr = &pair;
  return from_pairs(std::span<const EncodedPair* const>(&ptr, 1));
}

EncodedBatch EncodedBatch::padded(const EncodedPair& pair) {
  const EncodedPair* ptr = &pair;
  return stack(std::span<const EncodedPair* const>(&ptr, 1), static_cast<std::int64_t>(pair.token_ids.size()));
}

}  // namespace mkdm

#include "mkdm/soft_labels.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "io_util.hpp"
#include "mkdm/error.hpp"

namespace mkdm {

using Kind = DataError::Kind;

SoftLabelCache::SoftLabelCache(std::vector<std::string> teacher_ids, std::vector<std::string> example_ids,
                               std::vector<std::vector<float>> rows)
    : teacher_ids_(std::move(teacher_ids)), example_ids_(std::move(example_ids)), rows_(std::move(rows)) {
  std::unordered_set<std::string> teachers;
  for (const auto& t : teacher_ids_) {
    if (t.empty() || t.find_first_of("\t\n\r") != std::string::npos) {
      throw DataError(Kind::malformed, "invalid teacher id '" + t + "'");
    }
    if (!teachers.insert(t).second) throw DataError(Kind::duplicate_id, "duplicate teacher id '" + t + "'");
  }
  if (example_ids_.size() != rows_.size()) throw DataError(Kind::mismatch, "cache has unequal id and row counts");
  index_.reserve(example_ids_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!index_.emplace(example_ids_[i], i).second) {
      throw DataError(Kind::duplicate_id, "duplicate example id '" + example_ids_[i] + "' in cache");
    }
    if (rows_[i].size() != teacher_ids_.size()) {
      throw DataError(Kind::column_count, "cache row '" + example_ids_[i] + "' has " + std::to_string(rows_[i].size()) +
                                              " scores for " + std::to_string(teacher_ids_.size()) + " teachers");
    }
    for (float v : rows_[i]) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DataError(Kind::out_of_range, "cache score " + std::to_string(v) + " for '" + example_ids_[i] +
                                                "' lies outside [0, 1]");
      }
    }
  }
}

const std::vector<float>* SoftLabelCache::find(const std::string& example_id) const {
  const auto it = index_.find(example_id);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

SoftLabelCache SoftLabelCache::select(std::span<const std::string> teacher_ids) const {
  std::vector<std::size_t> columns;
  for (const auto& id : teacher_ids) {
    std::size_t c = 0;
    while (c < teacher_ids_.size() && teacher_ids_[c] != id) ++c;
    if (c == teacher_ids_.size()) throw DataError(Kind::missing_id, "cache has no teacher '" + id + "'");
    columns.push_back(c);
  }
  std::vector<std::vector<float>> rows;
  rows.reserve(rows_.size());
  for (const auto& row : rows_) {
    std::vector<float> r;
    for (auto c : columns) r.push_back(row[c]);
    rows.push_back(std::move(r));
  }
  return SoftLabelCache(std::vector<std::string>(teacher_ids.begin(), teacher_ids.end()), example_ids_,
                        std::move(rows));
}

SoftLabelCache SoftLabelCache::rows_for(std::span<const std::string> example_ids) const {
  std::vector<std::string> missing;
  std::vector<std::vector<float>> rows;
  rows.reserve(example_ids.size());
  for (const auto& id : example_ids) {
    const auto* row = find(id);
    if (row) {
      rows.push_back(*row);
    } else if (missing.size() < 10) {
      missing.push_back(id);
    }
  }
  if (rows.size() != example_ids.size()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DataError(Kind::missing_id, "cache lacks " + std::to_string(example_ids.size() - rows.size()) +
                                          " example ids: " + list);
  }
  return SoftLabelCache(teacher_ids_, std::vector<std::string>(example_ids.begin(), example_ids.end()),
                        std::move(rows));
}

std::string SoftLabelCache::to_tsv() const {
  std::string out = "example_id";
  for (const auto& t : teacher_ids_) out += '\t' + t;
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    out += example_ids_[i];
    for (float v : rows_[i]) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      out += '\t';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

SoftLabelCache SoftLabelCache::parse_tsv(std::string_view content) {
  const auto rows = io::lines(content);
  if (rows.empty()) throw DataError(Kind::malformed, "empty soft-label cache", 1);
  const auto header = io::split(rows[0], '\t');
  if (header.size() < 2 || header[0] != "example_id") {
    throw DataError(Kind::malformed, "cache header must be example_id followed by teacher ids", 1);
  }
  std::vector<std::string> teachers(header.begin() + 1, header.end());
  std::vector<std::string> ids;
  std::vector<std::vector<float>> values;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto fields = io::split(rows[i], '\t');
    if (fields.size() != header.size()) {
      throw DataError(Kind::column_count,
                      "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(fields.size()),
                      i + 1);
    }
    std::vector<float> row;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      float v = 0.0f;
      const auto* end = fields[c].data() + fields[c].size();
      const auto [ptr, ec] = std::from_chars(fields[c].data(), end, v);
      if (ec != std::errc() || ptr != end) {
        throw DataError(Kind::malformed, "score '" + std::string(fields[c]) + "' is not a number", i + 1);
      }
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DataError(Kind::out_of_range, "score '" + std::string(fields[c]) + "' outside [0, 1]", i + 1);
      }
      row.push_back(v);
    }
    ids.emplace_back(fields[0]);
    values.push_back(std::move(row));
  }
  return SoftLabelCache(std::move(teachers), std::move(ids), std::move(values));
}

void SoftLabelCache::save(const std::filesystem::path& path) const { io::write_file(path, to_tsv()); }

SoftLabelCache SoftLabelCache::load(const std::filesystem::path& path) { return parse_tsv(io::read_file(path)); }

}  // namespace mkdm

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mkdm {

/// Per-example teacher scores, one column per teacher.
class SoftLabelCache {
 public:
  SoftLabelCache() = default;
  /// Throws DataError on duplicate ids, ragged rows, or scores outside [0, 1].
  SoftLabelCache(std::vector<std::string> teacher_ids, std::vector<std::string> example_ids,
                 std::vector<std::vector<float>> rows);

  const std::vector<std::string>& teacher_ids() const noexcept { return teacher_ids_; }
  const std::vector<std::string>& example_ids() const noexcept { return example_ids_; }
  const std::vector<std::vector<float>>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t n_teachers() const noexcept { return teacher_ids_.size(); }

  const std::vector<float>* find(const std::string& example_id) const;
  /// Keeps the named columns, in the given order.
  SoftLabelCache select(std::span<const std::string> teacher_ids) const;
  /// Keeps the rows of the given examples, in the given order. Throws DataError
  /// listing ids the cache lacks.
  SoftLabelCache rows_for(std::span<const std::string> example_ids) const;

  /// Header `example_id  teacher…` (tab-separated), scores with 9 significant digits.
  std::string to_tsv() const;
  static SoftLabelCache parse_tsv(std::string_view content);
  void save(const std::filesystem::path& path) const;
  static SoftLabelCache load(const std::filesystem::path& path);

  friend bool operator==(const SoftLabelCache& a, const SoftLabelCache& b) {
    return a.teacher_ids_ == b.teacher_ids_ && a.example_ids_ == b.example_ids_ && a.rows_ == b.rows_;
  }

 private:
  std::vector<std::string> teacher_ids_;
  std::vector<std::string> example_ids_;
  std::vector<std::vector<float>> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mkdm

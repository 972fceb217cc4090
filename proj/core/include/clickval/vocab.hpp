#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clickval {

/// Ordered action alphabet plus the two designated pseudo-actions. The index
/// of a label is its position in `names`; every event in the pipeline carries
/// an index, labels only appear at the I/O boundary.
class ActionVocab {
 public:
  ActionVocab() = default;
  ActionVocab(std::vector<std::string> names, int purchase_id, int survey_id);

  int size() const { return static_cast<int>(names_.size()); }
  int purchase_id() const { return purchase_id_; }
  int survey_id() const { return survey_id_; }

  /// Index of label, or -1 when unknown.
  int index_of(std::string_view label) const;
  const std::string& label(int index) const;
  const std::vector<std::string>& names() const { return names_; }

  /// Order-sensitive hash of labels and designations; checkpoints embed it
  /// and refuse to load against a different vocabulary.
  uint64_t fingerprint() const;

  static ActionVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  void validate() const;

  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  int purchase_id_ = -1;
  int survey_id_ = -1;
};

}  // namespace clickval

#include "clickval/vocab.hpp"

#include <stdexcept>

#include "json_util.hpp"

namespace clickval {

ActionVocab::ActionVocab(std::vector<std::string> names, int purchase_id, int survey_id)
    : names_(std::move(names)), purchase_id_(purchase_id), survey_id_(survey_id) {
  index_.reserve(names_.size());
  for (int i = 0; i < static_cast<int>(names_.size()); ++i) {
    index_.emplace(names_[i], i);
  }
  validate();
}

void ActionVocab::validate() const {
  if (names_.empty()) throw std::runtime_error("vocab: empty action list");
  if (index_.size() != names_.size()) {
    throw std::runtime_error("vocab: duplicate action labels");
  }
  auto check_id = [&](int id, const char* what) {
    if (id < 0 || id >= size()) {
      throw std::runtime_error(std::string("vocab: ") + what + " index out of range");
    }
  };
  check_id(purchase_id_, "purchase");
  check_id(survey_id_, "survey");
  if (purchase_id_ == survey_id_) {
    throw std::runtime_error("vocab: purchase and survey must be distinct actions");
  }
}

int ActionVocab::index_of(std::string_view label) const {
  auto it = index_.find(std::string(label));
  return it == index_.end() ? -1 : it->second;
}

const std::string& ActionVocab::label(int index) const {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("vocab: action index " + std::to_string(index) +
                            " outside [0, " + std::to_string(size()) + ")");
  }
  return names_[static_cast<size_t>(index)];
}

uint64_t ActionVocab::fingerprint() const {
  uint64_t h = kFnvBasis;
  for (const auto& n : names_) {
    h = fnv1a(n, h);
    h = fnv1a("\x1f", h);  // separator, keeps ["ab","c"] distinct from ["a","bc"]
  }
  h = fnv1a_bytes(&purchase_id_, sizeof(purchase_id_), h);
  h = fnv1a_bytes(&survey_id_, sizeof(survey_id_), h);
  return h;
}

ActionVocab ActionVocab::load(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  const std::string ctx = "vocab file " + path.string();
  const json& actions = require_key(j, "actions", ctx);
  if (!actions.is_array()) throw std::runtime_error(ctx + ": \"actions\" must be an array");
  std::vector<std::string> names;
  names.reserve(actions.size());
  for (const auto& a : actions) names.push_back(a.get<std::string>());

  const std::string purchase = require_key(j, "purchase", ctx).get<std::string>();
  const std::string survey = require_key(j, "survey", ctx).get<std::string>();

  auto find = [&](const std::string& label, const char* what) {
    for (int i = 0; i < static_cast<int>(names.size()); ++i) {
      if (names[i] == label) return i;
    }
    throw std::runtime_error(ctx + ": " + what + " label \"" + label + "\" not in actions");
  };
  const int pid = find(purchase, "purchase");
  const int sid = find(survey, "survey");
  return ActionVocab(std::move(names), pid, sid);
}

void ActionVocab::save(const std::filesystem::path& path) const {
  json j;
  j["actions"] = names_;
  j["purchase"] = names_[static_cast<size_t>(purchase_id_)];
  j["survey"] = names_[static_cast<size_t>(survey_id_)];
  save_json_file(path, j);
}

}  // namespace clickval

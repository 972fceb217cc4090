#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "clickval/journey.hpp"
#include "clickval/vocab.hpp"

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("clickval-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }

 private:
  std::filesystem::path dir_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

/// n generic actions, the last two being Purchase and SurveyResponse.
inline clickval::ActionVocab make_vocab(int n) {
  std::vector<std::string> names;
  for (int i = 0; i + 2 < n; ++i) names.push_back("A" + std::to_string(i));
  names.push_back("Purchase");
  names.push_back("SurveyResponse");
  return clickval::ActionVocab(std::move(names), n - 2, n - 1);
}

inline clickval::Journey make_journey(const std::vector<int>& actions,
                                      const clickval::ActionVocab& vocab,
                                      const std::string& customer = "c0", int ordinal = 0) {
  clickval::Journey j;
  j.customer_id = customer;
  j.journey_id = customer + "#" + std::to_string(ordinal);
  for (size_t t = 0; t < actions.size(); ++t) {
    clickval::ClickEvent ev;
    ev.customer_id = customer;
    ev.ts_ms = 1000 + static_cast<int64_t>(t) * 1000;
    ev.action = actions[t];
    j.events.push_back(ev);
  }
  j.has_purchase = !actions.empty() && actions.back() == vocab.purchase_id();
  j.category = j.has_purchase ? clickval::JourneyCategory::kStart2P
                              : clickval::JourneyCategory::kNoP;
  for (size_t t = 0; t < actions.size(); ++t) {
    if (actions[t] == vocab.survey_id()) {
      j.survey_pos = static_cast<int>(t);
      break;
    }
  }
  return j;
}

}  // namespace testutil

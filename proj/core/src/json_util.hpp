#pragma once

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

#include "clickval/io.hpp"

namespace clickval {

using json = nlohmann::json;

inline json load_json_file(const std::filesystem::path& path) {
  json j = json::parse(read_text_file(path), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw std::runtime_error("invalid JSON in " + path.string());
  }
  return j;
}

inline void save_json_file(const std::filesystem::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

inline const json& require_key(const json& j, const char* key, const std::string& context) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw std::runtime_error(context + ": missing key \"" + key + "\"");
  }
  return *it;
}

}  // namespace clickval

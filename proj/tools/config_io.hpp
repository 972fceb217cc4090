#pragma once

// JSON <-> config-struct glue for the CLI. One run config file carries every
// section; each subcommand reads the sections it needs and flags override
// individual fields afterwards.

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "clickval/curate.hpp"
#include "clickval/encoder.hpp"
#include "clickval/io.hpp"
#include "clickval/rng.hpp"
#include "clickval/value.hpp"
#include "clickval/vocab.hpp"

namespace clickval::cli {

using nlohmann::json;

struct RunConfig {
  uint64_t seed = 1;
  json raw;  // full document, sections picked out lazily

  json section(const char* name) const {
    if (auto it = raw.find(name); it != raw.end()) return *it;
    return json::object();
  }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  if (!path.empty()) {
    cfg.raw = json::parse(read_text_file(path), nullptr, false);
    if (cfg.raw.is_discarded() || !cfg.raw.is_object()) {
      throw std::runtime_error("config file " + path.string() + " is not a JSON object");
    }
  } else {
    cfg.raw = json::object();
  }
  cfg.seed = cfg.raw.value("seed", uint64_t{1});
  return cfg;
}

template <typename T>
void maybe_set(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    field = it->get<T>();
  }
}

inline CurationConfig curation_from(const RunConfig& run) {
  CurationConfig cfg;
  const json j = run.section("curation");
  maybe_set(j, "min_len", cfg.min_len);
  maybe_set(j, "max_len", cfg.max_len);
  maybe_set(j, "purchase_ratio_num", cfg.purchase_ratio_num);
  maybe_set(j, "purchase_ratio_den", cfg.purchase_ratio_den);
  if (auto it = j.find("per_category_targets"); it != j.end()) {
    for (size_t c = 0; c < 4 && c < it->size(); ++c) {
      cfg.per_category_targets[c] = (*it)[c].get<int>();
    }
  }
  maybe_set(j, "train_fraction", cfg.train_fraction);
  cfg.seed = j.value("seed", uint64_t{0});
  if (cfg.seed == 0) cfg.seed = derive_seed(run.seed, "curate");
  return cfg;
}

inline EncoderConfig encoder_from(const RunConfig& run) {
  EncoderConfig cfg;
  const json j = run.section("encoder");
  maybe_set(j, "embed_dim", cfg.embed_dim);
  maybe_set(j, "hidden_dim", cfg.hidden_dim);
  if (auto it = j.find("cell"); it != j.end()) {
    const std::string cell = it->get<std::string>();
    if (cell == "basic") {
      cfg.cell = CellKind::kBasic;
    } else if (cell == "gated") {
      cfg.cell = CellKind::kGated;
    } else {
      throw std::runtime_error("encoder.cell must be \"basic\" or \"gated\", got \"" + cell + "\"");
    }
  }
  maybe_set(j, "learning_rate", cfg.learning_rate);
  maybe_set(j, "batch_size", cfg.batch_size);
  maybe_set(j, "max_epochs", cfg.max_epochs);
  maybe_set(j, "early_stop_patience", cfg.early_stop_patience);
  maybe_set(j, "heldout_fraction", cfg.heldout_fraction);
  maybe_set(j, "clip_norm", cfg.clip_norm);
  cfg.seed = j.value("seed", uint64_t{0});
  if (cfg.seed == 0) cfg.seed = derive_seed(run.seed, "encoder");
  return cfg;
}

inline EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "tabular") return EstimatorKind::kTabular;
  if (s == "linear") return EstimatorKind::kLinear;
  if (s == "one-hidden-layer" || s == "mlp") return EstimatorKind::kMlp;
  throw std::runtime_error("unknown estimator \"" + s +
                           "\"; expected tabular, linear or one-hidden-layer");
}

inline ValueConfig value_from(const RunConfig& run) {
  ValueConfig cfg;
  const json j = run.section("value");
  maybe_set(j, "gamma", cfg.gamma);
  maybe_set(j, "alpha", cfg.alpha);
  maybe_set(j, "alpha_decay", cfg.alpha_decay);
  if (auto it = j.find("estimator"); it != j.end()) {
    cfg.estimator = estimator_from_string(it->get<std::string>());
  }
  maybe_set(j, "mlp_width", cfg.mlp_width);
  maybe_set(j, "sweeps", cfg.sweeps);
  maybe_set(j, "batch_size", cfg.batch_size);
  maybe_set(j, "terminal_bootstrap", cfg.terminal_bootstrap);
  maybe_set(j, "stop_tol", cfg.stop_tol);
  maybe_set(j, "stop_patience", cfg.stop_patience);
  cfg.seed = j.value("seed", uint64_t{0});
  if (cfg.seed == 0) cfg.seed = derive_seed(run.seed, "value");
  return cfg;
}

inline RewardMap reward_from(const RunConfig& run, const ActionVocab& vocab) {
  RewardMap map = RewardMap::purchase_reward(vocab);
  const json j = run.section("reward_overrides");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const int idx = vocab.index_of(it.key());
    if (idx < 0) {
      throw std::runtime_error("reward_overrides: unknown action label \"" + it.key() + "\"");
    }
    map.by_action[static_cast<size_t>(idx)] = it.value().get<double>();
  }
  return map;
}

}  // namespace clickval::cli

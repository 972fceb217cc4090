#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clickval/journey.hpp"
#include "clickval/vocab.hpp"

namespace clickval {

struct CurationConfig {
  int min_len = 10;
  int max_len = 210;
  // purchase : no-purchase target, default 1:2
  int purchase_ratio_num = 1;
  int purchase_ratio_den = 2;
  // target count per category (P2P, START2P, AFTERP_NOP, NOP); 0 keeps all
  std::array<int, 4> per_category_targets{0, 0, 0, 0};
  double train_fraction = 0.75;
  uint64_t seed = 1;

  void validate(std::vector<std::string>& errors) const;
};

struct CurationStats {
  int n_input = 0;
  int dropped_length = 0;
  int sampled_out = 0;       // removed by category targets
  int ratio_removed = 0;     // removed to enforce the purchase ratio
  std::array<int, 4> category_counts{0, 0, 0, 0};
  int n_purchase = 0;
  int n_no_purchase = 0;
  bool ratio_satisfied = false;  // within +-10% of the requested ratio
  int n_train = 0;
  int n_test = 0;
};

struct Dataset {
  ActionVocab vocab;
  std::vector<Journey> train;
  std::vector<Journey> test;
  CurationConfig curation;
  CurationStats stats;
};

/// Length filter, per-category sampling, purchase-ratio downsampling and the
/// random train/test split. Survey-bearing journeys are always retained.
/// Deterministic given cfg.seed. When the ratio cannot be met the achieved
/// ratio is reported in stats (and by the CLI), never silently dropped.
Dataset curate(std::vector<Journey> journeys, ActionVocab vocab, const CurationConfig& cfg);

/// Directory layout: vocab.json, train.jsonl, test.jsonl, manifest.json.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace clickval

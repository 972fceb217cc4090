#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clickval/journey.hpp"
#include "clickval/vocab.hpp"

namespace clickval {

/// Synthetic clickstream generator. Customers browse under a latent
/// satisfaction regime: each regime has its own action transition matrix,
/// purchase and stop hazards, and survey score distribution. The latent
/// regime is recorded per step so evaluations can check against ground truth
/// the real data never provides.
struct SimConfig {
  int vocab_size = 20;
  int n_regimes = 2;
  /// transition[regime][from][to], row-stochastic over the full vocabulary.
  /// Rows for the purchase/survey pseudo-actions are never sampled from.
  std::vector<std::vector<std::vector<double>>> transition;
  double regime_switch_prob = 0.01;
  std::vector<double> purchase_hazard;  // per regime, per step
  std::vector<double> stop_hazard;      // per regime, per step
  /// Per-action multiplier on the purchase hazard (e.g. carts convert);
  /// applied to the hazard while the customer sits on that action.
  std::vector<double> action_hazard_scale;
  /// Per-action multiplier on the stop hazard (dead-end pages).
  std::vector<double> action_stop_scale;
  double survey_popup_prob = 0.0;  // at most one popup per journey
  std::vector<std::array<double, 11>> survey_score_dist;  // per regime, over 0..10
  std::vector<double> regime_satisfaction;                // per regime, in [0, 1]
  int start_action = 0;
  int max_len = 210;
  uint64_t seed = 1;

  void validate(std::vector<std::string>& errors) const;
};

struct LabeledJourney {
  Journey journey;
  std::vector<int> regime_path;  // latent regime per event
  double true_satisfaction = 0.0;
};

/// Deterministic given cfg.seed; journey k draws from its own derived RNG
/// stream, so generation order (or parallel generation) cannot change output.
std::vector<LabeledJourney> generate(const SimConfig& cfg, int n_journeys);

/// Vocabulary used by the bundled funnel preset: funnel pages first,
/// Purchase and SurveyResponse last.
ActionVocab default_sim_vocab(int vocab_size = 20);

/// Two-regime purchase-funnel preset. The satisfied regime walks down the
/// funnel (Home -> ProductCategory -> ProductDetail -> Customize -> cart)
/// and converts from cart pages; the struggling regime skips stages,
/// backtracks to Home and rarely converts.
SimConfig funnel_sim_config(int vocab_size = 20, uint64_t seed = 1);

/// Emit the same JSONL event schema real ingestion reads, plus a sidecar
/// JSONL of latent labels (evaluation only, never fed to training).
void save_sim_events(const std::vector<LabeledJourney>& journeys, const ActionVocab& vocab,
                     const std::filesystem::path& events_path,
                     const std::filesystem::path& labels_path);

struct SimLabel {
  std::string journey_id;
  std::vector<int> regime_path;
  double true_satisfaction = 0.0;
};
std::vector<SimLabel> load_sim_labels(const std::filesystem::path& labels_path);

SimConfig sim_config_from_json_file(const std::filesystem::path& path);
SimConfig sim_config_from_json_text(const std::string& text);
void save_sim_config(const SimConfig& cfg, const std::filesystem::path& path);

}  // namespace clickval

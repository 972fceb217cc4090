#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clickval/curate.hpp"
#include "clickval/encoder.hpp"
#include "clickval/mrp.hpp"
#include "clickval/vocab.hpp"

namespace clickval {

/// State the value function scores: the history vector carried into step t
/// plus the action taken at t. history may be empty (pure tabular settings).
struct StateRep {
  Eigen::VectorXd history;
  int action = -1;
};

/// Per-action reward table; the default pays 1 for Purchase and 0 elsewhere.
struct RewardMap {
  std::vector<double> by_action;

  static RewardMap purchase_reward(const ActionVocab& vocab);
  static RewardMap from_vector(std::vector<double> rewards);
  double reward(int action) const;
  int size() const { return static_cast<int>(by_action.size()); }
};

enum class EstimatorKind { kTabular, kLinear, kMlp };

std::string_view to_string(EstimatorKind k);

struct ValueConfig {
  double gamma = 0.9;
  double alpha = 1e-3;
  /// Step-size decay: effective alpha is alpha / (1 + alpha_decay * k) with
  /// k the per-state visit count (tabular) or global update count (others).
  /// 0 keeps alpha constant.
  double alpha_decay = 0.0;
  EstimatorKind estimator = EstimatorKind::kMlp;
  int mlp_width = 64;
  int sweeps = 50;
  /// Transitions per parameter step; 1 is pure online TD, larger values
  /// accumulate the semi-gradient over a minibatch before stepping.
  int batch_size = 1;
  /// Episodic convention: the last transition of a journey bootstraps on 0.
  /// Disable to treat journeys as windows into a continuing process.
  bool terminal_bootstrap = true;
  double stop_tol = 1e-4;  // mean |TD| improvement below this counts as stalled
  int stop_patience = 3;
  uint64_t seed = 1;

  void validate(std::vector<std::string>& errors) const;
};

/// Weights of the estimator f mapping StateRep -> value. Inputs are
/// [history ; one-hot(action)] for the linear and one-hidden-layer forms;
/// the tabular form indexes a table by action.
struct ValueParams {
  ValueConfig config;
  int history_dim = 0;
  int n_actions = 0;
  uint64_t encoder_fingerprint = 0;

  Eigen::VectorXd table;  // tabular

  Eigen::VectorXd w;  // linear
  double b = 0;

  Eigen::MatrixXd w1;  // mlp: width x input_dim
  Eigen::VectorXd b1;  // width
  Eigen::VectorXd w2;  // width
  double b2 = 0;

  // Step-size schedule state.
  Eigen::VectorXd visit_count;  // per action, tabular decay
  int64_t step_count = 0;

  int input_dim() const { return history_dim + n_actions; }
  uint64_t fingerprint() const;

  static ValueParams init(const ValueConfig& cfg, int history_dim, int n_actions,
                          uint64_t encoder_fingerprint);
  void save(const std::filesystem::path& path) const;
  static ValueParams load(const std::filesystem::path& path);
};

double value(const ValueParams& params, const StateRep& state);

/// d f(state) / d theta, laid out like the parameter blocks.
struct ValueGradient {
  Eigen::VectorXd table;
  Eigen::VectorXd w;
  double b = 0;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0;
};
ValueGradient value_gradient(const ValueParams& params, const StateRep& state);

struct TdResult {
  double td_error = 0;
  double alpha_used = 0;
};

/// One semi-gradient TD(0) step on the observed transition state -> next.
/// The target is reward(next.action) + gamma * V(next), with V(next) = 0
/// when the transition enters a terminal (end-of-episode) state. The target
/// is treated as a constant; only grad f(state) moves the parameters. With
/// the tabular estimator this is exactly V <- V + alpha * TD.
TdResult td_update(ValueParams& params, const StateRep& state, const StateRep& next,
                   bool next_terminal, const RewardMap& rewards);

struct ValueTrainLog {
  struct Sweep {
    int sweep = 0;
    double mean_abs_td = 0;
  };
  std::vector<Sweep> sweeps;
  bool stopped_early = false;
  /// Mean |TD| over the last quarter of sweeps stayed within 10% noise of
  /// nonincreasing; callers treat false as a convergence warning.
  bool tail_nonincreasing = true;

  std::string to_csv() const;
};

/// Precomputed per-journey encoder states: row t of h is the history carried
/// into step t (row 0 is h_0 = 0), actions[t] the action taken.
struct EpisodeStates {
  Eigen::MatrixXd h;  // m x history_dim
  std::vector<int> actions;
};

EpisodeStates episode_states(const EncoderParams& encoder, const Journey& journey);

/// Seeded, shuffled TD sweeps over all transitions of all episodes.
/// Throws on divergence (mean |TD| growing 10x above its running minimum).
ValueParams fit_episodes(std::span<const EpisodeStates> episodes, const ValueConfig& cfg,
                         const RewardMap& rewards, int history_dim, int n_actions,
                         uint64_t encoder_fingerprint, ValueTrainLog* log = nullptr);

/// TD learning over journeys of a curated dataset with a frozen encoder.
ValueParams train_values(const Dataset& dataset, const EncoderParams& encoder,
                         const ValueConfig& cfg, const RewardMap& rewards,
                         ValueTrainLog* log = nullptr);

/// TD on a continuing random walk through a tabular MRP (state == action,
/// empty history, rewards given by mrp.r). This is the path the exact_values
/// oracle certifies.
ValueParams fit_mrp_stream(const TabularMRP& mrp, const ValueConfig& cfg, int sweeps,
                           int transitions_per_sweep, ValueTrainLog* log = nullptr);

/// Proxy ratings y_t = f(h_{t-1}, A_t) for every step of the journey.
/// Read-only; parameters and encoder are untouched.
std::vector<double> score_journey(const EncoderParams& encoder, const ValueParams& values,
                                  const Journey& journey);

}  // namespace clickval

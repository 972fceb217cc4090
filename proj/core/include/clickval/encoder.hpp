#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clickval/curate.hpp"
#include "clickval/vocab.hpp"

namespace clickval {

enum class CellKind { kBasic, kGated };

std::string_view to_string(CellKind c);

struct EncoderConfig {
  int embed_dim = 150;
  int hidden_dim = 150;
  CellKind cell = CellKind::kGated;
  double learning_rate = 0.5;
  int batch_size = 16;
  int max_epochs = 20;
  int early_stop_patience = 3;
  double heldout_fraction = 0.1;  // slice of train used for the stopping signal
  double clip_norm = 5.0;         // global gradient norm cap, 0 disables
  uint64_t seed = 1;

  void validate(std::vector<std::string>& errors) const;
};

/// Weights of the next-action encoder g. The recurrent block holds all gates
/// stacked: 4*hidden rows for the gated cell (input, forget, candidate,
/// output), hidden rows for the basic tanh cell.
struct EncoderParams {
  EncoderConfig config;
  uint64_t vocab_fingerprint = 0;

  Eigen::MatrixXd embedding;  // |A| x embed_dim, one row per action
  Eigen::MatrixXd w_in;       // gates x embed_dim
  Eigen::MatrixXd w_rec;      // gates x hidden_dim
  Eigen::VectorXd bias;       // gates
  Eigen::MatrixXd w_out;      // |A| x hidden_dim
  Eigen::VectorXd b_out;      // |A|

  int vocab_size() const { return static_cast<int>(embedding.rows()); }
  int hidden_dim() const { return config.hidden_dim; }

  /// Hash over config and weights; value checkpoints pin it.
  uint64_t fingerprint() const;

  static EncoderParams init(const EncoderConfig& cfg, const ActionVocab& vocab);
  void save(const std::filesystem::path& path) const;
  static EncoderParams load(const std::filesystem::path& path,
                            const ActionVocab* expect_vocab = nullptr);
};

/// Recurrent state threaded through a journey; `h` is the history vector the
/// value function consumes, `c` the gated cell's memory (unused by kBasic).
struct EncoderState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

EncoderState initial_state(const EncoderParams& params);  // h_0 = 0
EncoderState encode_step(const EncoderParams& params, const EncoderState& prev, int action);
Eigen::VectorXd next_action_logits(const EncoderParams& params, const Eigen::VectorXd& h);

/// All history vectors of a journey: row t is h_t, the encoding of the first
/// t actions (row 0 is h_0 = 0). Shape (m+1) x hidden_dim.
Eigen::MatrixXd encode_journey(const EncoderParams& params, std::span<const int> actions);

struct EncoderGradients {
  Eigen::MatrixXd embedding, w_in, w_rec, w_out;
  Eigen::VectorXd bias, b_out;

  static EncoderGradients zeros_like(const EncoderParams& p);
  void add_scaled(const EncoderGradients& other, double scale);
  double squared_norm() const;
};

struct SequenceLoss {
  double nll_sum = 0;    // summed cross-entropy over predictions
  int n_predictions = 0;
};

/// Teacher-forced loss of one journey: predict actions[t+1] from the state
/// after actions[0..t]. Pass grads to accumulate d(nll_sum)/d(theta).
SequenceLoss sequence_loss(const EncoderParams& params, std::span<const int> actions,
                           EncoderGradients* grads = nullptr);

/// Mean per-prediction cross-entropy over a journey collection.
double corpus_cross_entropy(const EncoderParams& params, std::span<const Journey> journeys);

struct EncoderTrainLog {
  struct Epoch {
    int epoch = 0;
    double train_ce = 0;
    double heldout_ce = 0;
    double best_heldout_ce = 0;  // running best; nonincreasing by construction
  };
  std::vector<Epoch> epochs;
  int best_epoch = 0;

  std::string to_csv() const;
};

/// SGD over shuffled journey batches with early stopping on a held-out
/// slice; returns the parameters of the best held-out epoch. Deterministic
/// given cfg.seed.
EncoderParams train_encoder(const Dataset& dataset, const EncoderConfig& cfg,
                            EncoderTrainLog* log = nullptr);

}  // namespace clickval

#pragma once

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clickval/curate.hpp"
#include "clickval/encoder.hpp"
#include "clickval/metrics.hpp"

namespace clickval {

enum class SurveyClass { kPoor, kGood, kExcluded };

/// 0-4 poor, 6-10 good; the scale midpoint 5 takes no side and is excluded.
SurveyClass classify_survey_score(int score);

struct ConfusionReport {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  int64_t excluded_score5 = 0;
  int64_t excluded_short = 0;     // survey arrived before lag(q) is defined
  int64_t excluded_no_score = 0;  // survey event without a usable score

  int64_t used() const { return tp + fp + tn + fn; }
  double accuracy() const;
  double precision() const;  // positive class is "good"
  double recall() const;
  double f1() const;
};

/// Table-2 protocol: for each survey journey, the lag(q) indicator ending at
/// the last pre-survey action predicts the survey class ("good" when the
/// proxy rating rose). Nothing after that action is consulted, so traces
/// truncated at the survey leave the result unchanged.
ConfusionReport validate_against_survey(std::span<const Journey> journeys,
                                        std::span<const ProxyTrace> traces, int q);

struct PairReportRow {
  std::string source;
  std::string target;
  std::string stratum;
  int64_t n = 0;
  double z = 0;
  double ci95 = 0;  // normal-approximation binomial half-width
};

/// Rows for all cells with n >= min_n, ranked by |Z - 0.5| descending
/// (distance from the non-discriminative 0.5).
std::vector<PairReportRow> action_identification_report(
    std::span<const PairScoreMatrix> matrices, const ActionVocab& vocab, int64_t min_n);

struct PurchaseHeadConfig {
  double learning_rate = 0.2;
  int epochs = 4;
  uint64_t seed = 1;
  /// Single-class data is rejected by default; degenerate sanity runs opt in.
  bool allow_single_class = false;
};

/// Logistic head on the encoder state h_t, trained with the journey-end
/// purchase label broadcast to every timestep.
struct PurchaseHead {
  Eigen::VectorXd w;
  double b = 0;

  double probability(const Eigen::VectorXd& h) const;
};

PurchaseHead train_purchase_head(const Dataset& dataset, const EncoderParams& encoder,
                                 const PurchaseHeadConfig& cfg);

/// Per-timestep purchase probabilities p_t = head(h_t), t = 1..m.
std::vector<double> head_probabilities(const PurchaseHead& head, const EncoderParams& encoder,
                                       const Journey& journey);

/// ROC AUC via the rank statistic; ties contribute 1/2. Throws unless both
/// classes are present.
double purchase_auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;
};
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels);

/// Pearson correlation; nullopt when either series has no variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Hartigan-style dip: half the minimax ECDF deviation from the best
/// convex-concave (unimodal CDF) fit over candidate modes, computed on the
/// midpoint ECDF. Larger values indicate multi-modality.
double dip_statistic(std::vector<double> sample);

struct CorrelationStudy {
  struct Row {
    std::string journey_id;
    int length = 0;
    std::optional<double> corr_value;     // corr(p_t, y_t)
    std::optional<double> corr_prefix_z;  // corr(p_t, running Z)
  };
  struct BinSummary {
    int min_len = 0;
    int max_len = 0;
    std::vector<double> corr_value;
    std::vector<double> corr_prefix_z;
    double dip_value = 0;
    double dip_prefix_z = 0;
  };
  std::vector<Row> rows;
  std::vector<BinSummary> bins;
  int excluded_zero_variance = 0;
};

/// Per-journey correlation across timesteps between purchase probability and
/// (a) the proxy rating, (b) the running proportion of good ratings,
/// aggregated per journey-length bin.
CorrelationStudy correlation_study(std::span<const Journey> journeys,
                                   std::span<const ProxyTrace> traces,
                                   std::span<const std::vector<double>> purchase_probs,
                                   std::vector<int> length_bins = {25, 50, 75, 100});

}  // namespace clickval

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clickval/journey.hpp"
#include "clickval/vocab.hpp"

namespace clickval {

struct ProxyTrace {
  std::string journey_ref;
  std::vector<double> y;

  int length() const { return static_cast<int>(y.size()); }
};

/// lag(q) indicator: 1 iff y[t] strictly exceeds y[t-q]; ties and decreases
/// are 0. Indices are 0-based positions in the trace.
int lag_indicator(const ProxyTrace& trace, int t, int q);

/// Proportion of the m-1 successive pairs with a strict proxy-rating
/// increase. Undefined (throws) for traces shorter than 2.
double z_per_journey(const ProxyTrace& trace);

/// Running proportion: element t is the share of increases among the first
/// t+1 successive pairs. The last element equals z_per_journey.
std::vector<double> z_prefix(const ProxyTrace& trace);

/// Counts over successive action pairs: n is the number of traversals of
/// (source, target), z_sum how many of them showed a rating increase.
struct PairScoreMatrix {
  int n_actions = 0;
  std::string stratum;  // "all", "purchase" or "no-purchase"
  std::vector<int64_t> z_sum;  // row-major n_actions x n_actions
  std::vector<int64_t> n;

  int64_t count(int source, int target) const;
  int64_t increases(int source, int target) const;
  /// z_sum / n; only defined where n > 0 (throws otherwise).
  double z(int source, int target) const;
  int populated_cells() const;
};

/// Aggregate every successive pair across all journeys; every traversal is a
/// separate instance, never averaged per customer. With stratify_by_purchase
/// the result holds the "purchase" and "no-purchase" matrices, otherwise a
/// single "all" matrix.
std::vector<PairScoreMatrix> pair_scores(std::span<const Journey> journeys,
                                         std::span<const ProxyTrace> traces,
                                         const ActionVocab& vocab, bool stratify_by_purchase);

/// Distribution of per-journey Z bucketed by journey length. Bands split at
/// 0.4 and 0.6: proportions inside the middle band are treated as
/// non-discriminative.
struct ZDistribution {
  struct Bin {
    int min_len = 0;  // exclusive lower edge
    int max_len = 0;  // inclusive upper edge; INT32_MAX for the overflow bin
    int count = 0;
    std::vector<int> histogram;  // uniform buckets over [0, 1]
    double mass_below = 0;       // Z < 0.4
    double mass_mid = 0;         // 0.4 <= Z <= 0.6
    double mass_above = 0;       // Z > 0.6
  };
  std::vector<Bin> bins;
  int histogram_buckets = 0;
  int skipped_short = 0;  // journeys with fewer than 2 events
};

ZDistribution z_distribution(std::span<const Journey> journeys,
                             std::span<const ProxyTrace> traces,
                             std::vector<int> length_bins = {25, 50, 75, 100},
                             int histogram_buckets = 20);

}  // namespace clickval

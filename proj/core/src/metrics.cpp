#include "clickval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace clickval {

int lag_indicator(const ProxyTrace& trace, int t, int q) {
  if (q < 1) throw std::invalid_argument("lag_indicator: q must be >= 1");
  if (t < q || t >= trace.length()) {
    throw std::out_of_range("lag_indicator: t=" + std::to_string(t) + ", q=" + std::to_string(q) +
                            " outside trace of length " + std::to_string(trace.length()));
  }
  return trace.y[static_cast<size_t>(t)] - trace.y[static_cast<size_t>(t - q)] > 0.0 ? 1 : 0;
}

double z_per_journey(const ProxyTrace& trace) {
  if (trace.length() < 2) {
    throw std::invalid_argument("z_per_journey: undefined for traces shorter than 2 (journey " +
                                trace.journey_ref + ")");
  }
  int increases = 0;
  for (int t = 1; t < trace.length(); ++t) increases += lag_indicator(trace, t, 1);
  return static_cast<double>(increases) / static_cast<double>(trace.length() - 1);
}

std::vector<double> z_prefix(const ProxyTrace& trace) {
  if (trace.length() < 2) {
    throw std::invalid_argument("z_prefix: undefined for traces shorter than 2");
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(trace.length()) - 1);
  int increases = 0;
  for (int t = 1; t < trace.length(); ++t) {
    increases += lag_indicator(trace, t, 1);
    out.push_back(static_cast<double>(increases) / static_cast<double>(t));
  }
  return out;
}

int64_t PairScoreMatrix::count(int source, int target) const {
  return n[static_cast<size_t>(source) * static_cast<size_t>(n_actions) +
           static_cast<size_t>(target)];
}

int64_t PairScoreMatrix::increases(int source, int target) const {
  return z_sum[static_cast<size_t>(source) * static_cast<size_t>(n_actions) +
               static_cast<size_t>(target)];
}

double PairScoreMatrix::z(int source, int target) const {
  const int64_t c = count(source, target);
  if (c == 0) {
    throw std::domain_error("pair score undefined for unobserved pair (" +
                            std::to_string(source) + ", " + std::to_string(target) + ")");
  }
  return static_cast<double>(increases(source, target)) / static_cast<double>(c);
}

int PairScoreMatrix::populated_cells() const {
  return static_cast<int>(std::count_if(n.begin(), n.end(), [](int64_t c) { return c > 0; }));
}

std::vector<PairScoreMatrix> pair_scores(std::span<const Journey> journeys,
                                         std::span<const ProxyTrace> traces,
                                         const ActionVocab& vocab, bool stratify_by_purchase) {
  if (journeys.size() != traces.size()) {
    throw std::invalid_argument("pair_scores: journeys and traces must align");
  }
  const int a = vocab.size();
  auto make = [a](std::string stratum) {
    PairScoreMatrix m;
    m.n_actions = a;
    m.stratum = std::move(stratum);
    m.z_sum.assign(static_cast<size_t>(a) * static_cast<size_t>(a), 0);
    m.n.assign(static_cast<size_t>(a) * static_cast<size_t>(a), 0);
    return m;
  };
  std::vector<PairScoreMatrix> out;
  if (stratify_by_purchase) {
    out.push_back(make("purchase"));
    out.push_back(make("no-purchase"));
  } else {
    out.push_back(make("all"));
  }

  for (size_t k = 0; k < journeys.size(); ++k) {
    const Journey& jny = journeys[k];
    const ProxyTrace& trace = traces[k];
    if (trace.length() != jny.length()) {
      throw std::invalid_argument("pair_scores: trace length mismatch for journey " +
                                  jny.journey_id);
    }
    PairScoreMatrix& m = stratify_by_purchase ? (jny.has_purchase ? out[0] : out[1]) : out[0];
    for (int t = 1; t < jny.length(); ++t) {
      const int u = jny.events[static_cast<size_t>(t - 1)].action;
      const int w = jny.events[static_cast<size_t>(t)].action;
      if (u < 0 || u >= a || w < 0 || w >= a) {
        throw std::out_of_range("pair_scores: action index outside vocabulary in journey " +
                                jny.journey_id);
      }
      const size_t cell = static_cast<size_t>(u) * static_cast<size_t>(a) + static_cast<size_t>(w);
      m.n[cell] += 1;
      m.z_sum[cell] += lag_indicator(trace, t, 1);
    }
  }
  return out;
}

ZDistribution z_distribution(std::span<const Journey> journeys,
                             std::span<const ProxyTrace> traces, std::vector<int> length_bins,
                             int histogram_buckets) {
  if (journeys.size() != traces.size()) {
    throw std::invalid_argument("z_distribution: journeys and traces must align");
  }
  if (histogram_buckets < 1) {
    throw std::invalid_argument("z_distribution: histogram_buckets must be >= 1");
  }
  std::sort(length_bins.begin(), length_bins.end());

  ZDistribution dist;
  dist.histogram_buckets = histogram_buckets;
  int lower = 0;
  for (int edge : length_bins) {
    ZDistribution::Bin bin;
    bin.min_len = lower;
    bin.max_len = edge;
    bin.histogram.assign(static_cast<size_t>(histogram_buckets), 0);
    dist.bins.push_back(std::move(bin));
    lower = edge;
  }
  {
    ZDistribution::Bin overflow;
    overflow.min_len = lower;
    overflow.max_len = std::numeric_limits<int32_t>::max();
    overflow.histogram.assign(static_cast<size_t>(histogram_buckets), 0);
    dist.bins.push_back(std::move(overflow));
  }

  std::vector<std::array<int64_t, 3>> band_counts(dist.bins.size(), {0, 0, 0});
  for (size_t k = 0; k < journeys.size(); ++k) {
    if (traces[k].length() < 2) {
      ++dist.skipped_short;
      continue;
    }
    const int len = journeys[k].length();
    size_t b = 0;
    while (b + 1 < dist.bins.size() && len > dist.bins[b].max_len) ++b;
    const double z = z_per_journey(traces[k]);
    ZDistribution::Bin& bin = dist.bins[b];
    ++bin.count;
    int bucket = static_cast<int>(z * histogram_buckets);
    bucket = std::clamp(bucket, 0, histogram_buckets - 1);  // z == 1.0 lands in the top bucket
    ++bin.histogram[static_cast<size_t>(bucket)];
    if (z < 0.4) {
      ++band_counts[b][0];
    } else if (z <= 0.6) {
      ++band_counts[b][1];
    } else {
      ++band_counts[b][2];
    }
  }
  for (size_t b = 0; b < dist.bins.size(); ++b) {
    ZDistribution::Bin& bin = dist.bins[b];
    if (bin.count == 0) continue;
    const double total = static_cast<double>(bin.count);
    bin.mass_below = static_cast<double>(band_counts[b][0]) / total;
    bin.mass_mid = static_cast<double>(band_counts[b][1]) / total;
    bin.mass_above = static_cast<double>(band_counts[b][2]) / total;
  }
  return dist;
}

}  // namespace clickval

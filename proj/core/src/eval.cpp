#include "clickval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "clickval/rng.hpp"

namespace clickval {

SurveyClass classify_survey_score(int score) {
  if (score < 0 || score > 10) {
    throw std::out_of_range("survey score " + std::to_string(score) + " outside [0, 10]");
  }
  if (score <= 4) return SurveyClass::kPoor;
  if (score >= 6) return SurveyClass::kGood;
  return SurveyClass::kExcluded;
}

double ConfusionReport::accuracy() const {
  const int64_t total = used();
  return total == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
}
double ConfusionReport::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}
double ConfusionReport::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}
double ConfusionReport::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ConfusionReport validate_against_survey(std::span<const Journey> journeys,
                                        std::span<const ProxyTrace> traces, int q) {
  if (journeys.size() != traces.size()) {
    throw std::invalid_argument("validate_against_survey: journeys and traces must align");
  }
  if (q < 1) throw std::invalid_argument("validate_against_survey: q must be >= 1");

  ConfusionReport report;
  for (size_t k = 0; k < journeys.size(); ++k) {
    const Journey& jny = journeys[k];
    if (!jny.survey_pos) {
      throw std::invalid_argument("validate_against_survey: journey " + jny.journey_id +
                                  " has no survey event");
    }
    const int p = *jny.survey_pos;  // index of the survey event; t(k) actions precede it
    if (p < q + 1) {
      ++report.excluded_short;
      continue;
    }
    const auto& survey_event = jny.events[static_cast<size_t>(p)];
    if (!survey_event.survey_score) {
      ++report.excluded_no_score;
      continue;
    }
    const SurveyClass truth = classify_survey_score(*survey_event.survey_score);
    if (truth == SurveyClass::kExcluded) {
      ++report.excluded_score5;
      continue;
    }
    if (traces[k].length() < p) {
      throw std::invalid_argument("validate_against_survey: trace for journey " +
                                  jny.journey_id + " does not cover the pre-survey actions");
    }
    // lag(q) ending at the last pre-survey action; nothing beyond it is read.
    const int pred = lag_indicator(traces[k], p - 1, q);
    const bool predicted_good = pred == 1;
    const bool actually_good = truth == SurveyClass::kGood;
    if (predicted_good && actually_good) ++report.tp;
    if (predicted_good && !actually_good) ++report.fp;
    if (!predicted_good && !actually_good) ++report.tn;
    if (!predicted_good && actually_good) ++report.fn;
  }
  return report;
}

std::vector<PairReportRow> action_identification_report(
    std::span<const PairScoreMatrix> matrices, const ActionVocab& vocab, int64_t min_n) {
  if (min_n < 1) min_n = 1;
  std::vector<PairReportRow> rows;
  for (const auto& m : matrices) {
    if (m.n_actions != vocab.size()) {
      throw std::invalid_argument("action_identification_report: matrix/vocab size mismatch");
    }
    for (int u = 0; u < m.n_actions; ++u) {
      for (int w = 0; w < m.n_actions; ++w) {
        const int64_t n = m.count(u, w);
        if (n < min_n) continue;
        PairReportRow row;
        row.source = vocab.label(u);
        row.target = vocab.label(w);
        row.stratum = m.stratum;
        row.n = n;
        row.z = m.z(u, w);
        row.ci95 = 1.96 * std::sqrt(row.z * (1.0 - row.z) / static_cast<double>(n));
        rows.push_back(std::move(row));
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PairReportRow& a, const PairReportRow& b) {
    return std::abs(a.z - 0.5) > std::abs(b.z - 0.5);
  });
  return rows;
}

double PurchaseHead::probability(const Eigen::VectorXd& h) const {
  return 1.0 / (1.0 + std::exp(-(w.dot(h) + b)));
}

PurchaseHead train_purchase_head(const Dataset& dataset, const EncoderParams& encoder,
                                 const PurchaseHeadConfig& cfg) {
  if (dataset.train.empty()) throw std::runtime_error("train_purchase_head: empty training set");
  const bool first = dataset.train.front().has_purchase;
  const bool single_class = std::all_of(dataset.train.begin(), dataset.train.end(),
                                        [&](const Journey& j) { return j.has_purchase == first; });
  if (single_class && !cfg.allow_single_class) {
    throw std::runtime_error("train_purchase_head: training data contains a single class");
  }

  PurchaseHead head;
  head.w = Eigen::VectorXd::Zero(encoder.config.hidden_dim);

  std::vector<size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<int> actions;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "purchase-head", static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    for (size_t idx : order) {
      const Journey& jny = dataset.train[idx];
      actions.clear();
      for (const auto& ev : jny.events) actions.push_back(ev.action);
      const Eigen::MatrixXd hs = encode_journey(encoder, actions);
      const double label = jny.has_purchase ? 1.0 : 0.0;
      // Broadcast the journey-end label to every timestep; scale by journey
      // length so long journeys do not dominate.
      const double step = cfg.learning_rate / static_cast<double>(jny.length());
      for (int t = 1; t <= jny.length(); ++t) {
        const Eigen::VectorXd h = hs.row(t).transpose();
        const double err = label - head.probability(h);
        head.w += step * err * h;
        head.b += step * err;
      }
    }
  }
  return head;
}

std::vector<double> head_probabilities(const PurchaseHead& head, const EncoderParams& encoder,
                                       const Journey& journey) {
  std::vector<int> actions;
  actions.reserve(journey.events.size());
  for (const auto& ev : journey.events) actions.push_back(ev.action);
  const Eigen::MatrixXd hs = encode_journey(encoder, actions);
  std::vector<double> probs(actions.size());
  for (size_t t = 0; t < actions.size(); ++t) {
    probs[t] = head.probability(hs.row(static_cast<Eigen::Index>(t) + 1).transpose());
  }
  return probs;
}

namespace {

void check_binary_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: scores and labels must align");
  }
  int64_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    (l == 1 ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("auc: need at least one positive and one negative");
  }
}

}  // namespace

double purchase_auc(std::span<const double> scores, std::span<const int> labels) {
  check_binary_labels(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Average ranks over ties, then the Mann-Whitney statistic.
  double rank_sum_pos = 0;
  int64_t n_pos = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const auto n_neg = static_cast<int64_t>(n) - n_pos;
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels) {
  check_binary_labels(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;

  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  double tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    for (size_t k = i; k <= j; ++k) (labels[idx[k]] == 1 ? tp : fp) += 1;
    points.push_back({fp / n_neg, tp / n_pos, scores[idx[i]]});
    i = j + 1;
  }
  return points;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: series must align");
  const size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  // exact constancy means no variance; catching it before the arithmetic
  // avoids a rounding-noise pseudo-correlation
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  if (*amin == *amax || *bmin == *bmax) return std::nullopt;
  double saa = 0, sbb = 0, sab = 0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

namespace {

struct EcdfPoint {
  double x = 0;
  double f = 0;
};

/// Half the max positive deviation of the points above the greatest convex
/// minorant through them (mirrored for the concave side).
double convex_half_deviation(std::span<const EcdfPoint> pts, bool concave) {
  if (pts.size() < 3) return 0.0;
  // Hull over one representative per distinct x: the binding constraint is
  // the lowest f for the convex side, the highest for the concave side.
  std::vector<EcdfPoint> rep;
  rep.reserve(pts.size());
  for (const auto& p : pts) {
    const double f = concave ? -p.f : p.f;
    if (!rep.empty() && rep.back().x == p.x) {
      rep.back().f = std::min(rep.back().f, f);
    } else {
      rep.push_back({p.x, f});
    }
  }
  // Lower convex hull (monotone chain).
  std::vector<EcdfPoint> hull;
  for (const auto& p : rep) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull[hull.size() - 1];
      const double cross = (b.x - a.x) * (p.f - a.f) - (b.f - a.f) * (p.x - a.x);
      if (cross <= 0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(p);
  }
  // Max deviation of the (sign-adjusted) points above the hull.
  double dev = 0;
  size_t seg = 0;
  for (const auto& p : pts) {
    const double f = concave ? -p.f : p.f;
    while (seg + 1 < hull.size() && hull[seg + 1].x < p.x) ++seg;
    double hull_f;
    if (seg + 1 >= hull.size() || hull[seg].x == p.x) {
      hull_f = hull[seg].f;
    } else {
      const auto& a = hull[seg];
      const auto& b = hull[seg + 1];
      hull_f = a.f + (b.f - a.f) * (p.x - a.x) / (b.x - a.x);
    }
    dev = std::max(dev, f - hull_f);
  }
  return dev / 2.0;
}

}  // namespace

double dip_statistic(std::vector<double> sample) {
  const size_t n = sample.size();
  if (n < 4) return 0.0;
  std::sort(sample.begin(), sample.end());
  std::vector<EcdfPoint> pts(n);
  for (size_t i = 0; i < n; ++i) {
    pts[i] = {sample[i], (static_cast<double>(i) + 0.5) / static_cast<double>(n)};
  }
  double dip = std::numeric_limits<double>::infinity();
  for (size_t mode = 0; mode < n; ++mode) {
    const double left =
        convex_half_deviation(std::span<const EcdfPoint>(pts.data(), mode + 1), false);
    const double right = convex_half_deviation(
        std::span<const EcdfPoint>(pts.data() + mode, n - mode), true);
    dip = std::min(dip, std::max(left, right));
    if (dip == 0.0) break;
  }
  return dip;
}

CorrelationStudy correlation_study(std::span<const Journey> journeys,
                                   std::span<const ProxyTrace> traces,
                                   std::span<const std::vector<double>> purchase_probs,
                                   std::vector<int> length_bins) {
  if (journeys.size() != traces.size() || journeys.size() != purchase_probs.size()) {
    throw std::invalid_argument("correlation_study: inputs must align");
  }
  std::sort(length_bins.begin(), length_bins.end());

  CorrelationStudy study;
  int lower = 0;
  for (int edge : length_bins) {
    CorrelationStudy::BinSummary bin;
    bin.min_len = lower;
    bin.max_len = edge;
    study.bins.push_back(std::move(bin));
    lower = edge;
  }
  {
    CorrelationStudy::BinSummary overflow;
    overflow.min_len = lower;
    overflow.max_len = std::numeric_limits<int32_t>::max();
    study.bins.push_back(std::move(overflow));
  }

  for (size_t k = 0; k < journeys.size(); ++k) {
    const Journey& jny = journeys[k];
    const ProxyTrace& trace = traces[k];
    const std::vector<double>& probs = purchase_probs[k];
    if (trace.length() != jny.length() ||
        probs.size() != static_cast<size_t>(jny.length())) {
      throw std::invalid_argument("correlation_study: length mismatch for journey " +
                                  jny.journey_id);
    }
    CorrelationStudy::Row row;
    row.journey_id = jny.journey_id;
    row.length = jny.length();
    if (jny.length() >= 2) {
      row.corr_value = pearson(probs, trace.y);
      // Running Z starts after the first pair; align with p_t from t = 2 on.
      const std::vector<double> prefix = z_prefix(trace);
      row.corr_prefix_z = pearson(std::span<const double>(probs).subspan(1), prefix);
    }
    if ((jny.length() >= 2 && !row.corr_value) || (jny.length() >= 2 && !row.corr_prefix_z)) {
      ++study.excluded_zero_variance;
    }

    size_t b = 0;
    while (b + 1 < study.bins.size() && jny.length() > study.bins[b].max_len) ++b;
    if (row.corr_value) study.bins[b].corr_value.push_back(*row.corr_value);
    if (row.corr_prefix_z) study.bins[b].corr_prefix_z.push_back(*row.corr_prefix_z);
    study.rows.push_back(std::move(row));
  }
  for (auto& bin : study.bins) {
    bin.dip_value = dip_statistic(bin.corr_value);
    bin.dip_prefix_z = dip_statistic(bin.corr_prefix_z);
  }
  return study;
}

}  // namespace clickval

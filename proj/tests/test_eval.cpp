#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clickval/eval.hpp"
#include "clickval/rng.hpp"
#include "test_util.hpp"

using namespace clickval;
using testutil::make_vocab;

namespace {

ProxyTrace trace_of(std::vector<double> y, std::string ref = "t") {
  ProxyTrace t;
  t.journey_ref = std::move(ref);
  t.y = std::move(y);
  return t;
}

/// O(n^2) pairwise AUC oracle: P(score_pos > score_neg) + P(equal)/2.
double brute_force_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("survey scores classify by the scale midpoint") {
  for (int s = 0; s <= 4; ++s) CHECK(classify_survey_score(s) == SurveyClass::kPoor);
  CHECK(classify_survey_score(5) == SurveyClass::kExcluded);
  for (int s = 6; s <= 10; ++s) CHECK(classify_survey_score(s) == SurveyClass::kGood);
  CHECK_THROWS(classify_survey_score(11));
  CHECK_THROWS(classify_survey_score(-1));
}

namespace {

/// Journey with a survey at event index `pos` carrying `score`; earlier
/// events are plain content actions.
Journey survey_journey(const ActionVocab& vocab, int len, int pos, int score,
                       const std::string& id) {
  std::vector<int> actions(static_cast<size_t>(len), 0);
  actions[static_cast<size_t>(pos)] = vocab.survey_id();
  Journey j = testutil::make_journey(actions, vocab, id);
  j.events[static_cast<size_t>(pos)].survey_score = score;
  return j;
}

}  // namespace

TEST_CASE("survey validation reproduces a hand-computed confusion matrix") {
  const ActionVocab vocab = make_vocab(6);
  // four journeys: (pred 1, good), (pred 1, poor), (pred 0, poor), (pred 0, good)
  std::vector<Journey> journeys = {
      survey_journey(vocab, 5, 3, 8, "a"), survey_journey(vocab, 5, 3, 2, "b"),
      survey_journey(vocab, 5, 3, 2, "c"), survey_journey(vocab, 5, 3, 8, "d")};
  std::vector<ProxyTrace> traces = {
      trace_of({0.1, 0.2, 0.9, 0.0, 0.0}),  // rising into the survey: predict good
      trace_of({0.1, 0.2, 0.9, 0.0, 0.0}),
      trace_of({0.1, 0.9, 0.2, 0.0, 0.0}),  // falling: predict poor
      trace_of({0.1, 0.9, 0.2, 0.0, 0.0})};
  const ConfusionReport report = validate_against_survey(journeys, traces, 1);
  CHECK(report.tp == 1);
  CHECK(report.fp == 1);
  CHECK(report.tn == 1);
  CHECK(report.fn == 1);
  CHECK(report.accuracy() == 0.5);
  CHECK(report.precision() == 0.5);
  CHECK(report.recall() == 0.5);
  CHECK(report.f1() == 0.5);

  // identities hold exactly
  const double p = static_cast<double>(report.tp) / (report.tp + report.fp);
  const double r = static_cast<double>(report.tp) / (report.tp + report.fn);
  CHECK(std::abs(report.precision() - p) < 1e-12);
  CHECK(std::abs(report.recall() - r) < 1e-12);
  CHECK(std::abs(report.f1() - 2 * p * r / (p + r)) < 1e-12);
}

TEST_CASE("all-correct predictions score 1 across the board") {
  const ActionVocab vocab = make_vocab(6);
  std::vector<Journey> journeys = {survey_journey(vocab, 5, 3, 9, "a"),
                                   survey_journey(vocab, 5, 3, 1, "b")};
  std::vector<ProxyTrace> traces = {trace_of({0.1, 0.2, 0.9, 0.0, 0.0}),
                                    trace_of({0.1, 0.9, 0.2, 0.0, 0.0})};
  const ConfusionReport report = validate_against_survey(journeys, traces, 1);
  CHECK(report.accuracy() == 1.0);
  CHECK(report.precision() == 1.0);
  CHECK(report.recall() == 1.0);
  CHECK(report.f1() == 1.0);
}

TEST_CASE("survey validation exclusions") {
  const ActionVocab vocab = make_vocab(6);
  SUBCASE("midpoint scores are excluded and counted") {
    std::vector<Journey> journeys = {survey_journey(vocab, 5, 3, 5, "a")};
    std::vector<ProxyTrace> traces = {trace_of({0.1, 0.2, 0.9, 0.0, 0.0})};
    const ConfusionReport report = validate_against_survey(journeys, traces, 1);
    CHECK(report.used() == 0);
    CHECK(report.excluded_score5 == 1);
  }
  SUBCASE("surveys arriving before lag(q) is defined are excluded") {
    std::vector<Journey> journeys = {survey_journey(vocab, 5, 1, 8, "a")};
    std::vector<ProxyTrace> traces = {trace_of({0.1, 0.0, 0.3, 0.4, 0.5})};
    CHECK(validate_against_survey(journeys, traces, 1).excluded_short == 1);
    // q=2 needs two pre-survey actions beyond the lag
    std::vector<Journey> j2 = {survey_journey(vocab, 5, 2, 8, "b")};
    std::vector<ProxyTrace> t2 = {trace_of({0.1, 0.2, 0.0, 0.4, 0.5})};
    CHECK(validate_against_survey(j2, t2, 2).excluded_short == 1);
    CHECK(validate_against_survey(j2, t2, 1).used() == 1);
  }
  SUBCASE("journeys without surveys are rejected") {
    std::vector<Journey> journeys = {testutil::make_journey({0, 1, 2}, vocab)};
    std::vector<ProxyTrace> traces = {trace_of({0.1, 0.2, 0.3})};
    CHECK_THROWS(validate_against_survey(journeys, traces, 1));
  }
}

TEST_CASE("survey validation never reads past the survey") {
  const ActionVocab vocab = make_vocab(6);
  Rng rng(12);
  std::vector<Journey> journeys;
  std::vector<ProxyTrace> full, truncated;
  for (int i = 0; i < 40; ++i) {
    const int len = 6 + static_cast<int>(rng.below(10));
    const int pos = 2 + static_cast<int>(rng.below(static_cast<uint64_t>(len - 3)));
    const int score = static_cast<int>(rng.below(11));
    journeys.push_back(survey_journey(vocab, len, pos, score, "u" + std::to_string(i)));
    std::vector<double> y(static_cast<size_t>(len));
    for (auto& v : y) v = rng.uniform();
    full.push_back(trace_of(y));
    // physically truncate at the last pre-survey action
    y.resize(static_cast<size_t>(pos));
    truncated.push_back(trace_of(y));
  }
  for (int q : {1, 2}) {
    const ConfusionReport a = validate_against_survey(journeys, full, q);
    const ConfusionReport b = validate_against_survey(journeys, truncated, q);
    CHECK(a.tp == b.tp);
    CHECK(a.fp == b.fp);
    CHECK(a.tn == b.tn);
    CHECK(a.fn == b.fn);
    CHECK(a.excluded_score5 == b.excluded_score5);
    CHECK(a.excluded_short == b.excluded_short);
  }
}

TEST_CASE("AUC basics and oracles") {
  SUBCASE("perfect separation") {
    const std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
    const std::vector<int> labels = {1, 1, 0, 0};
    CHECK(purchase_auc(scores, labels) == 1.0);
  }
  SUBCASE("labels independent of scores hover at one half") {
    Rng rng(77);
    std::vector<double> scores(10000);
    std::vector<int> labels(10000);
    for (size_t i = 0; i < scores.size(); ++i) {
      scores[i] = rng.uniform();
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    CHECK(std::abs(purchase_auc(scores, labels) - 0.5) < 0.02);
  }
  SUBCASE("rank statistic equals the brute-force pairwise oracle") {
    Rng rng(13);
    std::vector<double> scores(500);
    std::vector<int> labels(500);
    for (size_t i = 0; i < scores.size(); ++i) {
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      // scores equal to labels with 20% flipped, plus heavy ties
      const int flipped = rng.bernoulli(0.2) ? 1 - labels[i] : labels[i];
      scores[i] = flipped + (rng.bernoulli(0.5) ? 0.0 : 0.25);
    }
    CHECK(purchase_auc(scores, labels) ==
          doctest::Approx(brute_force_auc(scores, labels)).epsilon(1e-12));
  }
  SUBCASE("invariant under strictly increasing transforms") {
    Rng rng(14);
    std::vector<double> scores(300);
    std::vector<int> labels(300);
    for (size_t i = 0; i < scores.size(); ++i) {
      scores[i] = rng.uniform(-2, 2);
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    const double base = purchase_auc(scores, labels);
    std::vector<double> mapped = scores;
    for (auto& s : mapped) s = std::atan(2 * s + 1);
    CHECK(purchase_auc(mapped, labels) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("single-class input is rejected") {
    CHECK_THROWS(purchase_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}));
  }
}

TEST_CASE("ROC points sweep from (0,0) to (1,1)") {
  const std::vector<double> scores = {0.9, 0.7, 0.7, 0.2};
  const std::vector<int> labels = {1, 0, 1, 0};
  const auto pts = roc_points(scores, labels);
  REQUIRE(pts.size() >= 3);
  CHECK(pts.front().fpr == 0.0);
  CHECK(pts.front().tpr == 0.0);
  CHECK(pts.back().fpr == 1.0);
  CHECK(pts.back().tpr == 1.0);
  for (size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].fpr >= pts[i - 1].fpr);
    CHECK(pts[i].tpr >= pts[i - 1].tpr);
  }
}

TEST_CASE("action identification ranks by distance from 0.5") {
  const ActionVocab vocab = make_vocab(6);
  PairScoreMatrix m;
  m.n_actions = vocab.size();
  m.stratum = "all";
  m.z_sum.assign(36, 0);
  m.n.assign(36, 0);
  auto set_cell = [&](int u, int w, int64_t n, int64_t z) {
    m.n[static_cast<size_t>(u * 6 + w)] = n;
    m.z_sum[static_cast<size_t>(u * 6 + w)] = z;
  };
  set_cell(0, 1, 100, 50);  // z = 0.5, least discriminative
  set_cell(1, 2, 100, 90);  // z = 0.9
  set_cell(2, 3, 100, 30);  // z = 0.3
  set_cell(3, 4, 3, 3);     // filtered by min_n

  const auto rows = action_identification_report({&m, 1}, vocab, 10);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].z == 0.9);
  CHECK(rows[1].z == 0.3);
  CHECK(rows[2].z == 0.5);  // ranks last
  for (const auto& row : rows) CHECK(row.n >= 10);
  // binomial half-width: 1.96 sqrt(p(1-p)/n)
  CHECK(rows[0].ci95 ==
        doctest::Approx(1.96 * std::sqrt(0.9 * 0.1 / 100.0)).epsilon(1e-12));
}

TEST_CASE("pearson handles constant series by reporting no value") {
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> c = {2, 2, 2, 2};
  CHECK(pearson(a, a).value() == doctest::Approx(1.0));
  CHECK_FALSE(pearson(a, c).has_value());
  std::vector<double> b = {4, 3, 2, 1};
  CHECK(pearson(a, b).value() == doctest::Approx(-1.0));
}

TEST_CASE("dip statistic separates clearly bimodal from unimodal samples") {
  Rng rng(2024);
  std::vector<double> unimodal, bimodal;
  for (int i = 0; i < 600; ++i) {
    // triangular-ish hump around 0.5
    unimodal.push_back((rng.uniform() + rng.uniform()) / 2);
    bimodal.push_back(rng.bernoulli(0.5) ? rng.uniform(0.0, 0.12) : rng.uniform(0.88, 1.0));
  }
  const double d_uni = dip_statistic(unimodal);
  const double d_bi = dip_statistic(bimodal);
  CHECK(d_bi > 3 * d_uni);
  CHECK(d_uni >= 0.0);
  CHECK(dip_statistic({0.1, 0.2}) == 0.0);  // too small to measure
}

TEST_CASE("purchase head basics") {
  const ActionVocab vocab = make_vocab(6);
  EncoderConfig ecfg;
  ecfg.embed_dim = 6;
  ecfg.hidden_dim = 6;
  const EncoderParams enc = EncoderParams::init(ecfg, vocab);

  Dataset all_purchase;
  all_purchase.vocab = vocab;
  for (int i = 0; i < 30; ++i) {
    std::vector<int> actions(8, 1);
    actions.back() = vocab.purchase_id();
    all_purchase.train.push_back(
        testutil::make_journey(actions, vocab, "p" + std::to_string(i)));
  }

  SUBCASE("single-class data is rejected by default") {
    CHECK_THROWS_WITH_AS(train_purchase_head(all_purchase, enc, PurchaseHeadConfig{}),
                         doctest::Contains("single class"), std::runtime_error);
  }
  SUBCASE("degenerate all-purchase corpus saturates the head") {
    PurchaseHeadConfig cfg;
    cfg.allow_single_class = true;
    cfg.epochs = 30;
    cfg.learning_rate = 1.0;
    const PurchaseHead head = train_purchase_head(all_purchase, enc, cfg);
    for (const auto& j : all_purchase.train) {
      for (double p : head_probabilities(head, enc, j)) {
        CHECK(p >= 0.9);
        CHECK(p < 1.0);  // sigmoid range
      }
    }
  }
}

TEST_CASE("correlation study aligns series and excludes degenerate journeys") {
  const ActionVocab vocab = make_vocab(6);
  std::vector<Journey> journeys = {testutil::make_journey({0, 1, 2, 3, 0, 1}, vocab, "a"),
                                   testutil::make_journey({0, 1, 2, 3, 0, 1}, vocab, "b")};
  // p_t == y_t identically: correlation 1
  std::vector<double> rising = {0.1, 0.2, 0.3, 0.5, 0.6, 0.9};
  std::vector<ProxyTrace> traces = {trace_of(rising, "a"),
                                    trace_of(std::vector<double>(6, 0.4), "b")};
  std::vector<std::vector<double>> probs = {rising, rising};

  const CorrelationStudy study = correlation_study(journeys, traces, probs);
  REQUIRE(study.rows.size() == 2);
  CHECK(study.rows[0].corr_value.value() == doctest::Approx(1.0));
  CHECK_FALSE(study.rows[1].corr_value.has_value());  // constant trace excluded
  CHECK(study.excluded_zero_variance >= 1);

  int binned = 0;
  for (const auto& bin : study.bins) binned += static_cast<int>(bin.corr_value.size());
  CHECK(binned == 1);
}

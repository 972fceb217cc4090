// Library-level integration over the synthetic two-regime corpus: encoder,
// TD values, proxy-rating metrics, validation and purchase prediction, all
// against the simulator's latent ground truth.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "clickval/curate.hpp"
#include "clickval/encoder.hpp"
#include "clickval/eval.hpp"
#include "clickval/metrics.hpp"
#include "clickval/sim.hpp"
#include "clickval/value.hpp"

using namespace clickval;

namespace {

struct Pipeline {
  ActionVocab vocab = default_sim_vocab(20);
  std::vector<LabeledJourney> corpus;
  Dataset dataset;
  EncoderParams encoder{};
  ValueParams values{};
  ValueTrainLog value_log;
  std::vector<ProxyTrace> test_traces;
  std::map<std::string, const LabeledJourney*> by_id;

  Pipeline() {
    corpus = generate(funnel_sim_config(20, 42), 2000);
    std::vector<Journey> journeys;
    for (const auto& lj : corpus) {
      journeys.push_back(lj.journey);
      by_id[lj.journey.journey_id] = &lj;
    }
    CurationConfig cur;
    cur.seed = 7;
    dataset = curate(std::move(journeys), vocab, cur);

    EncoderConfig ecfg;
    ecfg.embed_dim = 64;
    ecfg.hidden_dim = 64;
    ecfg.learning_rate = 1.0;
    ecfg.batch_size = 16;
    ecfg.max_epochs = 30;
    ecfg.early_stop_patience = 8;
    ecfg.seed = 11;
    encoder = train_encoder(dataset, ecfg);

    ValueConfig vcfg;
    vcfg.estimator = EstimatorKind::kMlp;
    vcfg.mlp_width = 128;
    vcfg.gamma = 0.9;
    vcfg.alpha = 0.25;
    vcfg.alpha_decay = 2e-5;
    vcfg.sweeps = 500;
    vcfg.stop_tol = 0;
    vcfg.seed = 13;
    values = train_values(dataset, encoder, vcfg, RewardMap::purchase_reward(vocab), &value_log);

    for (const auto& j : dataset.test) {
      ProxyTrace t;
      t.journey_ref = j.journey_id;
      t.y = score_journey(encoder, values, j);
      test_traces.push_back(std::move(t));
    }
  }
};

const Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("TD training converges without a divergence warning") {
  const auto& log = pipeline().value_log;
  REQUIRE(!log.sweeps.empty());
  CHECK(log.tail_nonincreasing);
}

TEST_CASE("proxy ratings separate the latent satisfaction regimes") {
  const Pipeline& p = pipeline();
  double sum[2] = {0, 0};
  int64_t cnt[2] = {0, 0};
  for (size_t k = 0; k < p.dataset.test.size(); ++k) {
    const auto& regimes = p.by_id.at(p.dataset.test[k].journey_id)->regime_path;
    for (int t = 0; t < p.dataset.test[k].length(); ++t) {
      sum[regimes[static_cast<size_t>(t)]] += p.test_traces[k].y[static_cast<size_t>(t)];
      ++cnt[regimes[static_cast<size_t>(t)]];
    }
  }
  const double mean_satisfied = sum[0] / static_cast<double>(cnt[0]);
  const double mean_struggling = sum[1] / static_cast<double>(cnt[1]);
  CHECK(mean_satisfied > 2.0 * mean_struggling);
}

TEST_CASE("journey-level Z predicts purchase better than survey scores") {
  const Pipeline& p = pipeline();
  std::vector<double> z_scores, survey_scores;
  std::vector<int> z_labels, survey_labels;
  for (size_t k = 0; k < p.dataset.test.size(); ++k) {
    const Journey& j = p.dataset.test[k];
    z_scores.push_back(z_per_journey(p.test_traces[k]));
    z_labels.push_back(j.has_purchase ? 1 : 0);
    if (j.survey_pos) {
      const auto& score = j.events[static_cast<size_t>(*j.survey_pos)].survey_score;
      if (score) {
        survey_scores.push_back(*score);
        survey_labels.push_back(j.has_purchase ? 1 : 0);
      }
    }
  }
  const double z_auc = purchase_auc(z_scores, z_labels);
  const double survey_auc = purchase_auc(survey_scores, survey_labels);
  CHECK(z_auc > 0.60);
  CHECK(z_auc > survey_auc);
}

TEST_CASE("the supervised purchase head discriminates at the final step") {
  const Pipeline& p = pipeline();
  PurchaseHeadConfig cfg;
  cfg.seed = 5;
  const PurchaseHead head = train_purchase_head(p.dataset, p.encoder, cfg);
  std::vector<double> final_probs;
  std::vector<int> labels;
  for (const auto& j : p.dataset.test) {
    const auto probs = head_probabilities(head, p.encoder, j);
    for (double prob : probs) {
      REQUIRE(prob > 0.0);
      REQUIRE(prob < 1.0);
    }
    final_probs.push_back(probs.back());
    labels.push_back(j.has_purchase ? 1 : 0);
  }
  CHECK(purchase_auc(final_probs, labels) > 0.7);
}

TEST_CASE("the funnel-skipping pair lands in the bottom decile of pair scores") {
  const Pipeline& p = pipeline();
  // whole-corpus pair table, popular pairs only
  std::vector<Journey> all;
  std::vector<ProxyTrace> traces;
  for (const auto* split : {&p.dataset.train, &p.dataset.test}) {
    for (const auto& j : *split) {
      ProxyTrace t;
      t.journey_ref = j.journey_id;
      t.y = score_journey(p.encoder, p.values, j);
      all.push_back(j);
      traces.push_back(std::move(t));
    }
  }
  const auto mats = pair_scores(all, traces, p.vocab, /*stratify=*/true);
  const auto rows = action_identification_report(mats, p.vocab, /*min_n=*/300);
  REQUIRE(rows.size() >= 10);

  std::vector<double> zs;
  double z_home_detail = -1;  // worst stratum row for the pair
  for (const auto& r : rows) {
    zs.push_back(r.z);
    if (r.source == "Home" && r.target == "ProductDetail") {
      z_home_detail = z_home_detail < 0 ? r.z : std::min(z_home_detail, r.z);
    }
  }
  REQUIRE(z_home_detail >= 0);  // the pair is populated
  std::sort(zs.begin(), zs.end());
  const auto rank = static_cast<size_t>(
      std::upper_bound(zs.begin(), zs.end(), z_home_detail) - zs.begin());
  const auto decile = static_cast<size_t>(std::max<double>(1.0, std::ceil(0.1 * zs.size())));
  CAPTURE(z_home_detail);
  CAPTURE(rank);
  CAPTURE(zs.size());
  CHECK(rank <= decile);

  // and the natural progression scores high
  for (const auto& r : rows) {
    if (r.source == "Home" && r.target == "ProductCategory") CHECK(r.z > 0.5);
  }
}

TEST_CASE("survey validation protocol accounts for every survey journey") {
  const Pipeline& p = pipeline();
  std::vector<Journey> journeys;
  std::vector<ProxyTrace> traces;
  for (size_t k = 0; k < p.dataset.test.size(); ++k) {
    if (p.dataset.test[k].survey_pos) {
      journeys.push_back(p.dataset.test[k]);
      traces.push_back(p.test_traces[k]);
    }
  }
  REQUIRE(journeys.size() >= 30);
  for (int q : {1, 2}) {
    const ConfusionReport rep = validate_against_survey(journeys, traces, q);
    CHECK(rep.used() + rep.excluded_score5 + rep.excluded_short + rep.excluded_no_score ==
          static_cast<int64_t>(journeys.size()));
    CHECK(rep.used() > 0);
    // weak sanity: the indicator should not be anti-correlated with ratings
    CHECK(rep.accuracy() > 0.4);
  }
}

TEST_CASE("correlation study runs over the scored test split") {
  const Pipeline& p = pipeline();
  PurchaseHeadConfig cfg;
  cfg.seed = 5;
  const PurchaseHead head = train_purchase_head(p.dataset, p.encoder, cfg);
  std::vector<std::vector<double>> probs;
  for (const auto& j : p.dataset.test) probs.push_back(head_probabilities(head, p.encoder, j));

  const CorrelationStudy study = correlation_study(p.dataset.test, p.test_traces, probs);
  CHECK(study.rows.size() == p.dataset.test.size());
  int populated = 0;
  for (const auto& bin : study.bins) {
    populated += static_cast<int>(bin.corr_value.size());
    CHECK(std::isfinite(bin.dip_value));
    CHECK(std::isfinite(bin.dip_prefix_z));
  }
  CHECK(populated > 0);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clickval/rng.hpp"
#include "clickval/value.hpp"
#include "test_util.hpp"

using namespace clickval;
using testutil::make_vocab;

namespace {

ValueConfig tabular_config() {
  ValueConfig cfg;
  cfg.estimator = EstimatorKind::kTabular;
  cfg.alpha = 0.5;
  cfg.alpha_decay = 0.02;
  cfg.stop_tol = 0;  // run all sweeps
  return cfg;
}

StateRep bare(int action) { return {Eigen::VectorXd(0), action}; }

double max_table_error(const ValueParams& params, const std::vector<double>& truth) {
  double err = 0;
  for (size_t s = 0; s < truth.size(); ++s) {
    err = std::max(err, std::abs(value(params, bare(static_cast<int>(s))) - truth[s]));
  }
  return err;
}

}  // namespace

TEST_CASE("reward map pays 1 at purchase and 0 elsewhere by default") {
  const ActionVocab vocab = make_vocab(6);
  const RewardMap map = RewardMap::purchase_reward(vocab);
  CHECK(map.reward(vocab.purchase_id()) == 1.0);
  CHECK(map.reward(0) == 0.0);
  CHECK(map.reward(vocab.survey_id()) == 0.0);

  RewardMap custom = map;
  custom.by_action[2] = 0.5;
  CHECK(custom.reward(2) == 0.5);
  CHECK_THROWS(custom.reward(vocab.size()));
}

TEST_CASE("fresh tabular estimator values every state at zero") {
  const ValueParams params = ValueParams::init(tabular_config(), 0, 5, 0);
  for (int a = 0; a < 5; ++a) CHECK(value(params, bare(a)) == 0.0);
  CHECK(value(params, bare(3)) == value(params, bare(3)));
}

TEST_CASE("td_update arithmetic on the tabular estimator") {
  ValueConfig cfg = tabular_config();
  cfg.alpha = 0.1;
  cfg.alpha_decay = 0;
  cfg.gamma = 0.9;
  ValueParams params = ValueParams::init(cfg, 0, 3, 0);
  const RewardMap rewards = RewardMap::from_vector({0.0, 1.0, 0.0});

  // V(s)=0, V(s')=0, r(s')=1: target 1, TD error 1, new V(s) = 0.1.
  const TdResult res = td_update(params, bare(0), bare(1), false, rewards);
  CHECK(res.td_error == 1.0);
  CHECK(value(params, bare(0)) == 0.1);
}

TEST_CASE("a zero TD error leaves parameters untouched") {
  ValueParams params = ValueParams::init(tabular_config(), 0, 3, 0);
  const RewardMap rewards = RewardMap::from_vector({0.0, 0.0, 0.0});
  const uint64_t before = params.fingerprint();
  const TdResult res = td_update(params, bare(0), bare(1), false, rewards);
  CHECK(res.td_error == 0.0);
  CHECK(params.fingerprint() == before);
}

TEST_CASE("linear semi-gradient step moves weights by alpha * td * features") {
  ValueConfig cfg;
  cfg.estimator = EstimatorKind::kLinear;
  cfg.alpha = 0.05;
  cfg.alpha_decay = 0;
  cfg.gamma = 0.8;
  ValueParams params = ValueParams::init(cfg, 3, 4, 0);
  const RewardMap rewards = RewardMap::from_vector({0, 0, 0, 1});

  Rng rng(5);
  StateRep s{Eigen::VectorXd(3), 1};
  StateRep next{Eigen::VectorXd(3), 3};
  for (int i = 0; i < 3; ++i) {
    s.history(i) = rng.uniform(-1, 1);
    next.history(i) = rng.uniform(-1, 1);
  }
  const Eigen::VectorXd w_before = params.w;
  const double b_before = params.b;
  const double expected_td = rewards.reward(3) + cfg.gamma * value(params, next) - value(params, s);
  const TdResult res = td_update(params, s, next, false, rewards);
  CHECK(res.td_error == doctest::Approx(expected_td).epsilon(1e-12));

  Eigen::VectorXd features = Eigen::VectorXd::Zero(7);
  features.head(3) = s.history;
  features(3 + s.action) = 1.0;
  const Eigen::VectorXd delta = params.w - w_before;
  for (int i = 0; i < 7; ++i) {
    CHECK(std::abs(delta(i) - cfg.alpha * res.td_error * features(i)) < 1e-10);
  }
  CHECK(std::abs((params.b - b_before) - cfg.alpha * res.td_error) < 1e-10);
}

TEST_CASE("value gradients match central finite differences") {
  Rng rng(99);
  for (EstimatorKind kind : {EstimatorKind::kLinear, EstimatorKind::kMlp}) {
    CAPTURE(to_string(kind));
    ValueConfig cfg;
    cfg.estimator = kind;
    cfg.mlp_width = 8;
    ValueParams params = ValueParams::init(cfg, 8, 5, 0);
    StateRep s{Eigen::VectorXd(8), 2};
    for (int i = 0; i < 8; ++i) s.history(i) = rng.uniform(-1, 1);

    const ValueGradient g = value_gradient(params, s);
    struct Block {
      double* data;
      const double* grad;
      Eigen::Index size;
    };
    std::vector<Block> blocks;
    if (kind == EstimatorKind::kLinear) {
      blocks.push_back({params.w.data(), g.w.data(), params.w.size()});
      blocks.push_back({&params.b, &g.b, 1});
    } else {
      blocks.push_back({params.w1.data(), g.w1.data(), params.w1.size()});
      blocks.push_back({params.b1.data(), g.b1.data(), params.b1.size()});
      blocks.push_back({params.w2.data(), g.w2.data(), params.w2.size()});
      blocks.push_back({&params.b2, &g.b2, 1});
    }
    const double eps = 1e-6;
    for (int check = 0; check < 24; ++check) {
      auto& block = blocks[static_cast<size_t>(check) % blocks.size()];
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(block.size)));
      const double saved = block.data[i];
      block.data[i] = saved + eps;
      const double up = value(params, s);
      block.data[i] = saved - eps;
      const double down = value(params, s);
      block.data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double rel = std::abs(block.grad[i] - numeric) /
                         std::max({1.0, std::abs(block.grad[i]), std::abs(numeric)});
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("tabular TD on a stream converges to the exact values") {
  for (uint64_t seed : {1ull, 5ull, 9ull}) {
    const TabularMRP mrp = random_mrp(5, 0.9, seed);
    const auto truth = exact_values(mrp);
    ValueConfig cfg = tabular_config();
    cfg.seed = seed + 100;
    const ValueParams params = fit_mrp_stream(mrp, cfg, 80, 2000);
    CHECK(max_table_error(params, truth) <= 0.02);
  }
}

TEST_CASE("episodic journeys from an MRP reach the oracle when bootstrap is continuing") {
  const TabularMRP mrp = random_mrp(5, 0.9, 33);
  const auto truth = exact_values(mrp);
  const auto journeys = journeys_from_mrp(mrp, 300, 101, 77);

  std::vector<EpisodeStates> episodes;
  for (const auto& j : journeys) {
    EpisodeStates ep;
    ep.h = Eigen::MatrixXd(j.length(), 0);
    for (const auto& ev : j.events) ep.actions.push_back(ev.action);
    episodes.push_back(std::move(ep));
  }
  ValueConfig cfg = tabular_config();
  cfg.sweeps = 25;
  cfg.terminal_bootstrap = false;  // windows into a continuing walk
  ValueTrainLog log;
  const ValueParams params = fit_episodes(episodes, cfg, RewardMap::from_vector(mrp.r), 0,
                                          mrp.n_states, 0, &log);
  CHECK(max_table_error(params, truth) <= 0.02);
  CHECK(log.tail_nonincreasing);
}

TEST_CASE("the default estimator fits one-hot MRP states within 0.05") {
  const TabularMRP mrp = random_mrp(5, 0.9, 21);
  const auto truth = exact_values(mrp);
  ValueConfig cfg;
  cfg.estimator = EstimatorKind::kMlp;
  cfg.mlp_width = 64;
  cfg.alpha = 0.08;
  cfg.alpha_decay = 2e-5;
  cfg.stop_tol = 0;
  const ValueParams params = fit_mrp_stream(mrp, cfg, 60, 2000);
  CHECK(max_table_error(params, truth) <= 0.05);
}

TEST_CASE("gamma = 0 reduces to the expected immediate reward") {
  TabularMRP chain;
  chain.n_states = 4;
  chain.p = {{0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {1, 0, 0, 0}};
  chain.r = {0.3, 0.5, 0.2, 0.9};
  chain.gamma = 0.0;
  ValueConfig cfg = tabular_config();
  cfg.gamma = 0.0;
  const ValueParams params = fit_mrp_stream(chain, cfg, 30, 1000);
  for (int s = 0; s < 4; ++s) {
    const int succ = (s + 1) % 4;
    CHECK(std::abs(value(params, bare(s)) - chain.r[static_cast<size_t>(succ)]) < 1e-3);
  }
}

TEST_CASE("proxy ratings rise toward the single terminal reward on a purchase chain") {
  const ActionVocab vocab = make_vocab(8);
  // deterministic episode 0 -> 1 -> ... -> 4 -> Purchase
  std::vector<int> actions = {0, 1, 2, 3, 4, vocab.purchase_id()};
  EpisodeStates ep;
  ep.h = Eigen::MatrixXd(static_cast<int>(actions.size()), 0);
  ep.actions = actions;

  ValueConfig cfg = tabular_config();
  cfg.sweeps = 300;
  cfg.gamma = 0.9;
  const ValueParams params =
      fit_episodes({&ep, 1}, cfg, RewardMap::purchase_reward(vocab), 0, vocab.size(), 0);

  // exact fixed point: V(a_t) = gamma^(m-2-t) for the pre-purchase actions,
  // and the purchase state itself is never a TD source, so it stays at 0.
  const int m = static_cast<int>(actions.size());
  std::vector<double> y(actions.size());
  for (int t = 0; t < m; ++t) y[static_cast<size_t>(t)] = value(params, bare(actions[static_cast<size_t>(t)]));
  for (int t = 0; t + 1 < m; ++t) {
    CHECK(y[static_cast<size_t>(t)] ==
          doctest::Approx(std::pow(cfg.gamma, m - 2 - t)).epsilon(1e-6));
    if (t + 2 < m) CHECK(y[static_cast<size_t>(t)] <= y[static_cast<size_t>(t + 1)]);
  }
  CHECK(y.back() == 0.0);
}

TEST_CASE("TD training aborts on divergence and names alpha") {
  const TabularMRP mrp = random_mrp(5, 0.9, 3);
  ValueConfig cfg = tabular_config();
  cfg.alpha = 2.2;  // past the stability edge but slow enough to stay finite
  cfg.alpha_decay = 0;
  CHECK_THROWS_WITH_AS(fit_mrp_stream(mrp, cfg, 100, 500), doctest::Contains("alpha"),
                       std::runtime_error);
}

TEST_CASE("score_journey is pure and reproducible") {
  const ActionVocab vocab = make_vocab(8);
  EncoderConfig ecfg;
  ecfg.embed_dim = 6;
  ecfg.hidden_dim = 6;
  const EncoderParams encoder = EncoderParams::init(ecfg, vocab);

  ValueConfig vcfg;
  vcfg.estimator = EstimatorKind::kMlp;
  vcfg.mlp_width = 8;
  ValueParams values = ValueParams::init(vcfg, 6, vocab.size(), encoder.fingerprint());

  const Journey j1 = testutil::make_journey({0, 1, 2, 3}, vocab);
  const uint64_t enc_fp = encoder.fingerprint();
  const uint64_t val_fp = values.fingerprint();
  const auto t1 = score_journey(encoder, values, j1);
  const auto t2 = score_journey(encoder, values, j1);
  CHECK(t1 == t2);
  REQUIRE(t1.size() == 4);
  CHECK(encoder.fingerprint() == enc_fp);
  CHECK(values.fingerprint() == val_fp);

  const Journey single = testutil::make_journey({5}, vocab);
  CHECK(score_journey(encoder, values, single).size() == 1);

  // checkpoint pinning: a different encoder is rejected
  EncoderConfig other_cfg = ecfg;
  other_cfg.seed = 999;
  const EncoderParams other = EncoderParams::init(other_cfg, vocab);
  CHECK_THROWS_WITH_AS(score_journey(other, values, j1), doctest::Contains("encoder"),
                       std::runtime_error);
}

TEST_CASE("value checkpoints round-trip") {
  testutil::TempDir tmp("value-ckpt");
  ValueConfig cfg;
  cfg.estimator = EstimatorKind::kMlp;
  cfg.mlp_width = 8;
  const ValueParams params = ValueParams::init(cfg, 6, 9, 1234);
  params.save(tmp / "val.json");
  const ValueParams back = ValueParams::load(tmp / "val.json");
  CHECK(back.fingerprint() == params.fingerprint());
  CHECK(back.encoder_fingerprint == 1234);
  CHECK(back.config.estimator == EstimatorKind::kMlp);
}

TEST_CASE("value config validation names every violation") {
  ValueConfig cfg;
  cfg.gamma = 1.5;
  cfg.alpha = 0;
  cfg.sweeps = 0;
  std::vector<std::string> errors;
  cfg.validate(errors);
  CHECK(errors.size() == 3);
}

#include "clickval/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "clickval/rng.hpp"
#include "json_util.hpp"

namespace clickval {

void SimConfig::validate(std::vector<std::string>& errors) const {
  if (vocab_size < 4) errors.push_back("sim.vocab_size must be >= 4");
  if (n_regimes < 1) errors.push_back("sim.n_regimes must be >= 1");
  if (max_len < 1) errors.push_back("sim.max_len must be >= 1");
  if (start_action < 0 || start_action >= vocab_size - 2) {
    errors.push_back("sim.start_action must name a content action");
  }
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) errors.push_back(std::string("sim.") + name + " must be in [0, 1]");
  };
  prob(regime_switch_prob, "regime_switch_prob");
  prob(survey_popup_prob, "survey_popup_prob");

  auto per_regime = [&](size_t n, const char* name) {
    if (static_cast<int>(n) != n_regimes) {
      errors.push_back(std::string("sim.") + name + " must have one entry per regime");
      return false;
    }
    return true;
  };
  if (per_regime(purchase_hazard.size(), "purchase_hazard")) {
    for (double p : purchase_hazard) prob(p, "purchase_hazard");
  }
  if (per_regime(stop_hazard.size(), "stop_hazard")) {
    for (double p : stop_hazard) prob(p, "stop_hazard");
  }
  if (!action_hazard_scale.empty() && static_cast<int>(action_hazard_scale.size()) != vocab_size) {
    errors.push_back("sim.action_hazard_scale must have one entry per action");
  }
  for (double s : action_hazard_scale) {
    if (s < 0) errors.push_back("sim.action_hazard_scale entries must be nonnegative");
  }
  if (!action_stop_scale.empty() && static_cast<int>(action_stop_scale.size()) != vocab_size) {
    errors.push_back("sim.action_stop_scale must have one entry per action");
  }
  for (double s : action_stop_scale) {
    if (s < 0) errors.push_back("sim.action_stop_scale entries must be nonnegative");
  }
  if (per_regime(survey_score_dist.size(), "survey_score_dist")) {
    for (const auto& dist : survey_score_dist) {
      double sum = 0;
      for (double w : dist) {
        if (w < 0) errors.push_back("sim.survey_score_dist weights must be nonnegative");
        sum += w;
      }
      if (sum <= 0) errors.push_back("sim.survey_score_dist rows must have positive mass");
    }
  }
  if (per_regime(regime_satisfaction.size(), "regime_satisfaction")) {
    for (double v : regime_satisfaction) {
      if (!(v >= 0.0 && v <= 1.0)) errors.push_back("sim.regime_satisfaction must be in [0, 1]");
    }
  }
  if (per_regime(transition.size(), "transition")) {
    for (int g = 0; g < n_regimes; ++g) {
      const auto& m = transition[static_cast<size_t>(g)];
      if (static_cast<int>(m.size()) != vocab_size) {
        errors.push_back("sim.transition[" + std::to_string(g) + "] must be vocab_size x vocab_size");
        continue;
      }
      for (int i = 0; i < vocab_size; ++i) {
        const auto& row = m[static_cast<size_t>(i)];
        if (static_cast<int>(row.size()) != vocab_size) {
          errors.push_back("sim.transition[" + std::to_string(g) + "] row " + std::to_string(i) +
                           " has wrong width");
          continue;
        }
        double sum = 0;
        bool neg = false;
        for (double v : row) {
          if (v < 0) neg = true;
          sum += v;
        }
        if (neg) errors.push_back("sim.transition has negative entries");
        if (std::abs(sum - 1.0) > 1e-9) {
          errors.push_back("sim.transition[" + std::to_string(g) + "] row " + std::to_string(i) +
                           " sums to " + std::to_string(sum));
        }
      }
    }
  }
}

namespace {

void throw_if_invalid(const SimConfig& cfg) {
  std::vector<std::string> errors;
  cfg.validate(errors);
  if (!errors.empty()) {
    std::string msg = "invalid sim config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
}

std::string customer_name(int k) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "c%06d", k);
  return buf;
}

}  // namespace

std::vector<LabeledJourney> generate(const SimConfig& cfg, int n_journeys) {
  throw_if_invalid(cfg);
  if (n_journeys < 0) throw std::runtime_error("generate: n_journeys must be >= 0");

  const int purchase = cfg.vocab_size - 2;
  const int survey = cfg.vocab_size - 1;

  std::vector<LabeledJourney> out;
  out.reserve(static_cast<size_t>(n_journeys));
  for (int k = 0; k < n_journeys; ++k) {
    Rng rng(derive_seed(cfg.seed, "sim-journey", static_cast<uint64_t>(k)));
    LabeledJourney lj;
    Journey& jny = lj.journey;
    jny.customer_id = customer_name(k);
    jny.journey_id = jny.customer_id + "#0";
    const int64_t base_ts = 1 + static_cast<int64_t>(k) * 86400000ll;

    int regime = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.n_regimes)));
    int cur = cfg.start_action;
    bool content_emitted = false;
    bool survey_shown = false;

    auto emit = [&](int action, std::optional<int> score) {
      ClickEvent ev;
      ev.customer_id = jny.customer_id;
      ev.ts_ms = base_ts + static_cast<int64_t>(jny.events.size()) * 1000;
      ev.action = action;
      ev.survey_score = score;
      jny.events.push_back(std::move(ev));
      lj.regime_path.push_back(regime);
    };

    while (jny.length() < cfg.max_len) {
      if (!jny.events.empty() && cfg.n_regimes > 1 && rng.bernoulli(cfg.regime_switch_prob)) {
        // jump uniformly to one of the other regimes
        int next = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.n_regimes - 1)));
        regime = next >= regime ? next + 1 : next;
      }
      const double scale =
          (content_emitted && !cfg.action_hazard_scale.empty())
              ? cfg.action_hazard_scale[static_cast<size_t>(cur)]
              : 1.0;
      const double hazard =
          std::min(1.0, cfg.purchase_hazard[static_cast<size_t>(regime)] * scale);
      if (rng.bernoulli(hazard)) {
        emit(purchase, std::nullopt);
        break;  // purchase ends the journey
      }
      const double stop_scale =
          (content_emitted && !cfg.action_stop_scale.empty())
              ? cfg.action_stop_scale[static_cast<size_t>(cur)]
              : 1.0;
      if (!jny.events.empty() &&
          rng.bernoulli(std::min(1.0, cfg.stop_hazard[static_cast<size_t>(regime)] * stop_scale))) {
        break;
      }
      if (!survey_shown && rng.bernoulli(cfg.survey_popup_prob)) {
        const auto& dist = cfg.survey_score_dist[static_cast<size_t>(regime)];
        const int score = static_cast<int>(rng.categorical(std::span<const double>(dist)));
        emit(survey, score);
        survey_shown = true;
        continue;  // browsing resumes from the same content action
      }
      if (content_emitted) {
        cur = static_cast<int>(
            rng.categorical(cfg.transition[static_cast<size_t>(regime)][static_cast<size_t>(cur)]));
      }
      emit(cur, std::nullopt);
      content_emitted = true;
    }

    jny.has_purchase = !jny.events.empty() && jny.events.back().action == purchase;
    jny.category = jny.has_purchase ? JourneyCategory::kStart2P : JourneyCategory::kNoP;
    for (int t = 0; t < jny.length(); ++t) {
      if (jny.events[static_cast<size_t>(t)].action == survey) {
        jny.survey_pos = t;
        break;
      }
    }
    double sat = 0;
    for (int g : lj.regime_path) sat += cfg.regime_satisfaction[static_cast<size_t>(g)];
    lj.true_satisfaction = lj.regime_path.empty() ? 0.0 : sat / static_cast<double>(lj.regime_path.size());
    out.push_back(std::move(lj));
  }
  return out;
}

ActionVocab default_sim_vocab(int vocab_size) {
  if (vocab_size < 4) throw std::runtime_error("default_sim_vocab: vocab_size must be >= 4");
  static const char* kFunnelNames[] = {
      "Home",     "ProductCategory", "ProductDetail", "Customize", "AddToCart", "ViewCart",
      "Search",   "Promotion",       "Reviews",       "Compare",   "Help",      "Account",
      "Wishlist", "Shipping",        "Returns",       "Deals",     "Blog",      "Support",
  };
  std::vector<std::string> names;
  const int n_content = vocab_size - 2;
  for (int i = 0; i < n_content; ++i) {
    if (i < static_cast<int>(std::size(kFunnelNames))) {
      names.emplace_back(kFunnelNames[i]);
    } else {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "Page%02d", i);
      names.emplace_back(buf);
    }
  }
  names.emplace_back("Purchase");
  names.emplace_back("SurveyResponse");
  return ActionVocab(std::move(names), n_content, n_content + 1);
}

namespace {

// Row builder: named spikes plus a little uniform smoothing over the first
// `smooth_range` content actions, normalized to 1. Purchase/survey columns
// stay 0 (they are reached through hazards, not transitions).
std::vector<double> make_row(int vocab_size, std::initializer_list<std::pair<int, double>> spikes,
                             int smooth_range = -1, double smooth = 0.02) {
  const int n_content = vocab_size - 2;
  if (smooth_range < 0 || smooth_range > n_content) smooth_range = n_content;
  std::vector<double> row(static_cast<size_t>(vocab_size), 0.0);
  for (int i = 0; i < smooth_range; ++i) row[static_cast<size_t>(i)] = smooth;
  for (auto [idx, w] : spikes) {
    if (idx < n_content) row[static_cast<size_t>(idx)] += w;
  }
  double sum = 0;
  for (double v : row) sum += v;
  for (double& v : row) v /= sum;
  return row;
}

}  // namespace

SimConfig funnel_sim_config(int vocab_size, uint64_t seed) {
  if (vocab_size < 10) throw std::runtime_error("funnel_sim_config: vocab_size must be >= 10");
  enum { kHome = 0, kCategory, kDetail, kCustomize, kCart, kViewCart, kSearch, kPromo };
  const int n_content = vocab_size - 2;

  SimConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.n_regimes = 2;
  cfg.seed = seed;
  cfg.regime_switch_prob = 0.010;
  cfg.purchase_hazard = {0.010, 0.0045};
  cfg.stop_hazard = {0.008, 0.030};
  cfg.survey_popup_prob = 0.018;
  cfg.max_len = 120;
  cfg.start_action = kHome;
  cfg.regime_satisfaction = {1.0, 0.0};

  cfg.action_hazard_scale.assign(static_cast<size_t>(vocab_size), 1.0);
  cfg.action_hazard_scale[kDetail] = 0.1;
  cfg.action_hazard_scale[kCustomize] = 2.0;
  cfg.action_hazard_scale[kCart] = 6.0;
  cfg.action_hazard_scale[kViewCart] = 9.0;

  // ProductDetail reached outside the funnel is a dead end: journeys tend to
  // end there, which is what pulls its pair scores down.
  cfg.action_stop_scale.assign(static_cast<size_t>(vocab_size), 1.0);
  cfg.action_stop_scale[kDetail] = 14.0;

  // Survey scores lean with the regime but overlap; a uniform floor keeps the
  // explicit rating a noisy purchase predictor.
  cfg.survey_score_dist = {
      {2, 2, 3, 3, 4, 5, 7, 9, 10, 9, 6},  // satisfied: mode at 8
      {5, 7, 9, 9, 8, 6, 5, 4, 3, 2, 2},   // struggling: mode at 3
  };

  auto satisfied = std::vector<std::vector<double>>(static_cast<size_t>(vocab_size));
  auto struggling = std::vector<std::vector<double>>(static_cast<size_t>(vocab_size));

  // Regime 0: steady funnel progress; ProductDetail is a research detour
  // off the Category -> Customize -> cart path, not the path itself.
  constexpr int kFunnelPages = kPromo + 1;
  satisfied[kHome] = make_row(vocab_size, {{kCategory, 0.58}, {kSearch, 0.14}, {kPromo, 0.08}, {kHome, 0.04}}, kFunnelPages);
  satisfied[kCategory] = make_row(vocab_size, {{kCustomize, 0.30}, {kDetail, 0.20}, {kCategory, 0.12}, {kSearch, 0.06}}, kFunnelPages);
  satisfied[kDetail] = make_row(vocab_size, {{kCategory, 0.28}, {kCustomize, 0.20}, {kDetail, 0.10}, {kCart, 0.04}}, kFunnelPages);
  satisfied[kCustomize] = make_row(vocab_size, {{kCart, 0.42}, {kCustomize, 0.16}, {kCategory, 0.08}}, kFunnelPages);
  satisfied[kCart] = make_row(vocab_size, {{kViewCart, 0.50}, {kCustomize, 0.14}}, kFunnelPages);
  satisfied[kViewCart] = make_row(vocab_size, {{kViewCart, 0.30}, {kCustomize, 0.16}, {kCart, 0.10}}, kFunnelPages);
  satisfied[kSearch] = make_row(vocab_size, {{kCategory, 0.40}, {kCustomize, 0.14}, {kSearch, 0.10}}, kFunnelPages);
  satisfied[kPromo] = make_row(vocab_size, {{kCategory, 0.42}, {kCustomize, 0.10}, {kPromo, 0.10}}, kFunnelPages);

  satisfied[kHome][kDetail] = 0.0;  // jumping straight to details is a struggle tell
  {
    double sum = 0;
    for (double v : satisfied[kHome]) sum += v;
    for (double& v : satisfied[kHome]) v /= sum;
  }

  // Regime 1: skips the funnel (Home -> ProductDetail), backtracks, loops.
  struggling[kHome] = make_row(vocab_size, {{kDetail, 0.44}, {kSearch, 0.15}, {kPromo, 0.09}, {kHome, 0.09}});
  struggling[kCategory] = make_row(vocab_size, {{kHome, 0.32}, {kCategory, 0.18}, {kSearch, 0.18}});
  struggling[kDetail] = make_row(vocab_size, {{kDetail, 0.36}, {kHome, 0.20}, {kSearch, 0.12}, {kCategory, 0.05}});
  struggling[kCustomize] = make_row(vocab_size, {{kHome, 0.40}, {kDetail, 0.18}});
  struggling[kCart] = make_row(vocab_size, {{kHome, 0.30}, {kSearch, 0.20}, {kViewCart, 0.08}});
  struggling[kViewCart] = make_row(vocab_size, {{kHome, 0.40}, {kSearch, 0.12}});
  struggling[kSearch] = make_row(vocab_size, {{kSearch, 0.30}, {kHome, 0.22}, {kDetail, 0.08}});
  struggling[kPromo] = make_row(vocab_size, {{kPromo, 0.25}, {kHome, 0.25}});

  // Remaining content pages: light research in regime 0, aimless in regime 1.
  for (int i = kPromo + 1; i < n_content; ++i) {
    satisfied[static_cast<size_t>(i)] =
        make_row(vocab_size, {{kCategory, 0.30}, {kDetail, 0.25}, {kHome, 0.10}});
    struggling[static_cast<size_t>(i)] =
        make_row(vocab_size, {{i, 0.30}, {kHome, 0.22}, {kSearch, 0.16}});
  }
  // Pseudo-action rows are never sampled from; keep them stochastic anyway.
  for (int i = n_content; i < vocab_size; ++i) {
    satisfied[static_cast<size_t>(i)] = make_row(vocab_size, {{kHome, 1.0}});
    struggling[static_cast<size_t>(i)] = make_row(vocab_size, {{kHome, 1.0}});
  }

  cfg.transition = {std::move(satisfied), std::move(struggling)};
  throw_if_invalid(cfg);
  return cfg;
}

void save_sim_events(const std::vector<LabeledJourney>& journeys, const ActionVocab& vocab,
                     const std::filesystem::path& events_path,
                     const std::filesystem::path& labels_path) {
  std::string events;
  std::string labels;
  for (const auto& lj : journeys) {
    for (const auto& ev : lj.journey.events) {
      json e;
      e["customer_id"] = ev.customer_id;
      e["ts"] = ev.ts_ms;
      e["action"] = vocab.label(ev.action);
      if (ev.dwell_ms) e["dwell_ms"] = *ev.dwell_ms;
      if (ev.survey_score) e["survey_score"] = *ev.survey_score;
      events += e.dump();
      events += '\n';
    }
    json l;
    l["customer_id"] = lj.journey.customer_id;
    l["journey_id"] = lj.journey.journey_id;
    l["regime_path"] = lj.regime_path;
    l["true_satisfaction"] = lj.true_satisfaction;
    labels += l.dump();
    labels += '\n';
  }
  write_file_atomic(events_path, events);
  write_file_atomic(labels_path, labels);
}

std::vector<SimLabel> load_sim_labels(const std::filesystem::path& labels_path) {
  std::ifstream in(labels_path);
  if (!in) throw std::runtime_error("cannot open labels file: " + labels_path.string());
  std::vector<SimLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j = json::parse(line);
    SimLabel l;
    l.journey_id = j.at("journey_id").get<std::string>();
    l.regime_path = j.at("regime_path").get<std::vector<int>>();
    l.true_satisfaction = j.at("true_satisfaction").get<double>();
    out.push_back(std::move(l));
  }
  return out;
}

namespace {

json sim_to_json(const SimConfig& cfg) {
  json j;
  j["vocab_size"] = cfg.vocab_size;
  j["n_regimes"] = cfg.n_regimes;
  j["transition"] = cfg.transition;
  j["regime_switch_prob"] = cfg.regime_switch_prob;
  j["purchase_hazard"] = cfg.purchase_hazard;
  j["stop_hazard"] = cfg.stop_hazard;
  j["action_hazard_scale"] = cfg.action_hazard_scale;
  j["action_stop_scale"] = cfg.action_stop_scale;
  j["survey_popup_prob"] = cfg.survey_popup_prob;
  j["survey_score_dist"] = cfg.survey_score_dist;
  j["regime_satisfaction"] = cfg.regime_satisfaction;
  j["start_action"] = cfg.start_action;
  j["max_len"] = cfg.max_len;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

SimConfig sim_config_from_json_file(const std::filesystem::path& path) {
  return sim_config_from_json_text(read_text_file(path));
}

SimConfig sim_config_from_json_text(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw std::runtime_error("sim config is not a JSON object");
  }
  SimConfig cfg;
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset != "funnel") throw std::runtime_error("unknown sim preset \"" + preset + "\"");
    cfg = funnel_sim_config(j.value("vocab_size", 20), j.value("seed", uint64_t{1}));
  }
  auto set = [&j](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) field = it->get<std::decay_t<decltype(field)>>();
  };
  if (!j.contains("preset")) {
    set("vocab_size", cfg.vocab_size);
    set("n_regimes", cfg.n_regimes);
    set("transition", cfg.transition);
  }
  set("regime_switch_prob", cfg.regime_switch_prob);
  set("purchase_hazard", cfg.purchase_hazard);
  set("stop_hazard", cfg.stop_hazard);
  set("action_hazard_scale", cfg.action_hazard_scale);
  set("action_stop_scale", cfg.action_stop_scale);
  set("survey_popup_prob", cfg.survey_popup_prob);
  set("survey_score_dist", cfg.survey_score_dist);
  set("regime_satisfaction", cfg.regime_satisfaction);
  set("start_action", cfg.start_action);
  set("max_len", cfg.max_len);
  set("seed", cfg.seed);
  throw_if_invalid(cfg);
  return cfg;
}

void save_sim_config(const SimConfig& cfg, const std::filesystem::path& path) {
  save_json_file(path, sim_to_json(cfg));
}

}  // namespace clickval

#include "clickval/value.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clickval/io.hpp"
#include "clickval/rng.hpp"
#include "json_util.hpp"

namespace clickval {

std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kTabular: return "tabular";
    case EstimatorKind::kLinear: return "linear";
    case EstimatorKind::kMlp: return "one-hidden-layer";
  }
  return "one-hidden-layer";
}

RewardMap RewardMap::purchase_reward(const ActionVocab& vocab) {
  RewardMap m;
  m.by_action.assign(static_cast<size_t>(vocab.size()), 0.0);
  m.by_action[static_cast<size_t>(vocab.purchase_id())] = 1.0;
  return m;
}

RewardMap RewardMap::from_vector(std::vector<double> rewards) {
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::runtime_error("reward map: non-finite reward");
  }
  RewardMap m;
  m.by_action = std::move(rewards);
  return m;
}

double RewardMap::reward(int action) const {
  if (action < 0 || action >= size()) {
    throw std::out_of_range("reward map: action index " + std::to_string(action) +
                            " outside [0, " + std::to_string(size()) + ")");
  }
  return by_action[static_cast<size_t>(action)];
}

void ValueConfig::validate(std::vector<std::string>& errors) const {
  if (!(gamma >= 0.0 && gamma < 1.0)) errors.push_back("value.gamma must be in [0, 1)");
  if (!(alpha > 0)) errors.push_back("value.alpha must be positive");
  if (alpha_decay < 0) errors.push_back("value.alpha_decay must be nonnegative");
  if (mlp_width <= 0) errors.push_back("value.mlp_width must be positive");
  if (sweeps <= 0) errors.push_back("value.sweeps must be positive");
  if (batch_size <= 0) errors.push_back("value.batch_size must be positive");
  if (stop_patience < 1) errors.push_back("value.stop_patience must be >= 1");
}

namespace {

void throw_if_invalid(const ValueConfig& cfg) {
  std::vector<std::string> errors;
  cfg.validate(errors);
  if (!errors.empty()) {
    std::string msg = "invalid value config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
}

void check_state(const ValueParams& p, const StateRep& s) {
  if (s.action < 0 || s.action >= p.n_actions) {
    throw std::out_of_range("value: action index " + std::to_string(s.action) +
                            " outside [0, " + std::to_string(p.n_actions) + ")");
  }
  if (static_cast<int>(s.history.size()) != p.history_dim) {
    throw std::invalid_argument("value: history has dimension " +
                                std::to_string(s.history.size()) + ", estimator expects " +
                                std::to_string(p.history_dim));
  }
}

Eigen::VectorXd features_of(const ValueParams& p, const StateRep& s) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p.input_dim());
  if (p.history_dim > 0) x.head(p.history_dim) = s.history;
  x(p.history_dim + s.action) = 1.0;
  return x;
}

}  // namespace

uint64_t ValueParams::fingerprint() const {
  uint64_t h = fnv1a(std::string(to_string(config.estimator)));
  h = fnv1a_bytes(&history_dim, sizeof(history_dim), h);
  h = fnv1a_bytes(&n_actions, sizeof(n_actions), h);
  auto hash_vec = [&h](const Eigen::VectorXd& v) {
    h = fnv1a_bytes(v.data(), sizeof(double) * static_cast<size_t>(v.size()), h);
  };
  hash_vec(table);
  hash_vec(w);
  h = fnv1a_bytes(&b, sizeof(b), h);
  h = fnv1a_bytes(w1.data(), sizeof(double) * static_cast<size_t>(w1.size()), h);
  hash_vec(b1);
  hash_vec(w2);
  h = fnv1a_bytes(&b2, sizeof(b2), h);
  return h;
}

ValueParams ValueParams::init(const ValueConfig& cfg, int history_dim, int n_actions,
                              uint64_t encoder_fingerprint) {
  throw_if_invalid(cfg);
  if (history_dim < 0) throw std::runtime_error("value: history_dim must be >= 0");
  if (n_actions <= 0) throw std::runtime_error("value: n_actions must be positive");

  ValueParams p;
  p.config = cfg;
  p.history_dim = history_dim;
  p.n_actions = n_actions;
  p.encoder_fingerprint = encoder_fingerprint;
  p.visit_count = Eigen::VectorXd::Zero(n_actions);

  Rng rng(derive_seed(cfg.seed, "value-init"));
  switch (cfg.estimator) {
    case EstimatorKind::kTabular:
      p.table = Eigen::VectorXd::Zero(n_actions);
      break;
    case EstimatorKind::kLinear:
      p.w.resize(p.input_dim());
      for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w(i) = rng.uniform(-0.05, 0.05);
      p.b = rng.uniform(-0.05, 0.05);
      break;
    case EstimatorKind::kMlp:
      p.w1.resize(cfg.mlp_width, p.input_dim());
      p.b1 = Eigen::VectorXd::Zero(cfg.mlp_width);
      p.w2.resize(cfg.mlp_width);
      for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = rng.uniform(-0.05, 0.05);
      for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2(i) = rng.uniform(-0.05, 0.05);
      p.b2 = rng.uniform(-0.05, 0.05);
      break;
  }
  return p;
}

double value(const ValueParams& params, const StateRep& state) {
  check_state(params, state);
  switch (params.config.estimator) {
    case EstimatorKind::kTabular:
      return params.table(state.action);
    case EstimatorKind::kLinear:
      return params.w.dot(features_of(params, state)) + params.b;
    case EstimatorKind::kMlp: {
      const Eigen::VectorXd x = features_of(params, state);
      const Eigen::VectorXd u = ((params.w1 * x + params.b1).array().tanh()).matrix();
      return params.w2.dot(u) + params.b2;
    }
  }
  throw std::logic_error("value: unknown estimator");
}

ValueGradient value_gradient(const ValueParams& params, const StateRep& state) {
  check_state(params, state);
  ValueGradient g;
  switch (params.config.estimator) {
    case EstimatorKind::kTabular:
      g.table = Eigen::VectorXd::Zero(params.n_actions);
      g.table(state.action) = 1.0;
      break;
    case EstimatorKind::kLinear:
      g.w = features_of(params, state);
      g.b = 1.0;
      break;
    case EstimatorKind::kMlp: {
      const Eigen::VectorXd x = features_of(params, state);
      const Eigen::VectorXd u = ((params.w1 * x + params.b1).array().tanh()).matrix();
      const Eigen::VectorXd du = ((1.0 - u.array().square()) * params.w2.array()).matrix();
      g.w1 = du * x.transpose();
      g.b1 = du;
      g.w2 = u;
      g.b2 = 1.0;
      break;
    }
  }
  return g;
}

namespace {

double next_alpha(ValueParams& p, int action) {
  const ValueConfig& cfg = p.config;
  double k;
  if (cfg.estimator == EstimatorKind::kTabular) {
    k = p.visit_count(action);
    p.visit_count(action) += 1.0;
  } else {
    k = static_cast<double>(p.step_count);
  }
  ++p.step_count;
  return cfg.alpha_decay > 0 ? cfg.alpha / (1.0 + cfg.alpha_decay * k) : cfg.alpha;
}

void apply_gradient(ValueParams& p, const ValueGradient& g, double coeff) {
  switch (p.config.estimator) {
    case EstimatorKind::kTabular:
      p.table += coeff * g.table;
      break;
    case EstimatorKind::kLinear:
      p.w += coeff * g.w;
      p.b += coeff * g.b;
      break;
    case EstimatorKind::kMlp:
      p.w1 += coeff * g.w1;
      p.b1 += coeff * g.b1;
      p.w2 += coeff * g.w2;
      p.b2 += coeff * g.b2;
      break;
  }
}

}  // namespace

namespace {

/// Reused per-thread buffers; td_update runs millions of times per fit and
/// per-update heap traffic dominates otherwise.
struct MlpScratch {
  Eigen::VectorXd x, u, du;
};

double mlp_value(const ValueParams& p, const StateRep& s, MlpScratch& ws) {
  ws.x.setZero(p.input_dim());
  if (p.history_dim > 0) ws.x.head(p.history_dim) = s.history;
  ws.x(p.history_dim + s.action) = 1.0;
  ws.u.noalias() = p.w1 * ws.x;
  ws.u += p.b1;
  ws.u = ws.u.array().tanh().matrix();
  return p.w2.dot(ws.u) + p.b2;
}

}  // namespace

TdResult td_update(ValueParams& params, const StateRep& state, const StateRep& next,
                   bool next_terminal, const RewardMap& rewards) {
  check_state(params, state);
  check_state(params, next);
  const bool mlp = params.config.estimator == EstimatorKind::kMlp;
  thread_local MlpScratch cur_ws, next_ws;

  const double bootstrap =
      next_terminal ? 0.0 : (mlp ? mlp_value(params, next, next_ws) : value(params, next));
  const double target = rewards.reward(next.action) + params.config.gamma * bootstrap;
  const double current = mlp ? mlp_value(params, state, cur_ws) : value(params, state);
  const double td_error = target - current;
  if (!std::isfinite(td_error)) {
    throw std::runtime_error("td_update: non-finite TD error at action " +
                             std::to_string(state.action) + " (value " + std::to_string(current) +
                             ", target " + std::to_string(target) + ")");
  }
  const double alpha = next_alpha(params, state.action);
  const double coeff = alpha * td_error;
  if (coeff != 0.0) {
    if (mlp) {
      // semi-gradient step, fused to avoid temporaries; cur_ws still holds
      // the forward pass of `state`
      cur_ws.du = ((1.0 - cur_ws.u.array().square()) * params.w2.array()).matrix();
      params.w1.noalias() += coeff * cur_ws.du * cur_ws.x.transpose();
      params.b1 += coeff * cur_ws.du;
      params.w2 += coeff * cur_ws.u;
      params.b2 += coeff;
    } else {
      const ValueGradient g = value_gradient(params, state);
      apply_gradient(params, g, coeff);
    }
  }
  return {td_error, alpha};
}

std::string ValueTrainLog::to_csv() const {
  std::string out = "sweep,mean_abs_td\n";
  for (const auto& s : sweeps) {
    out += std::to_string(s.sweep) + "," + format_double(s.mean_abs_td) + "\n";
  }
  return out;
}

namespace {

/// Shared sweep bookkeeping: early stop on stalled mean |TD|, hard stop on
/// divergence, tail monotonicity check for the log.
class SweepMonitor {
 public:
  SweepMonitor(const ValueConfig& cfg, ValueTrainLog* log) : cfg_(cfg), log_(log) {}

  /// Returns true when training should stop.
  bool record(int sweep, double mean_abs_td) {
    if (log_) log_->sweeps.push_back({sweep, mean_abs_td});
    history_.push_back(mean_abs_td);
    if (mean_abs_td < min_seen_) min_seen_ = mean_abs_td;
    if (history_.size() >= 2 && min_seen_ > 0 && mean_abs_td > 10.0 * min_seen_) {
      throw std::runtime_error("TD training diverged: mean |TD| " + std::to_string(mean_abs_td) +
                               " vs minimum " + std::to_string(min_seen_) +
                               "; reduce alpha (currently " + std::to_string(cfg_.alpha) + ")");
    }
    if (cfg_.stop_tol > 0) {
      if (best_ - mean_abs_td < cfg_.stop_tol) {
        ++stale_;
      } else {
        stale_ = 0;
      }
      best_ = std::min(best_, mean_abs_td);
      if (stale_ >= cfg_.stop_patience) {
        if (log_) log_->stopped_early = true;
        return true;
      }
    }
    return false;
  }

  void finish() {
    if (!log_ || history_.empty()) return;
    const size_t tail_start = history_.size() - std::max<size_t>(1, history_.size() / 4);
    for (size_t i = tail_start + 1; i < history_.size(); ++i) {
      if (history_[i] > history_[i - 1] * 1.10) {
        log_->tail_nonincreasing = false;
        return;
      }
    }
  }

 private:
  const ValueConfig& cfg_;
  ValueTrainLog* log_;
  std::vector<double> history_;
  double min_seen_ = std::numeric_limits<double>::infinity();
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

}  // namespace

EpisodeStates episode_states(const EncoderParams& encoder, const Journey& journey) {
  EpisodeStates ep;
  ep.actions.reserve(journey.events.size());
  for (const auto& ev : journey.events) ep.actions.push_back(ev.action);
  // Row t is the history *before* action t: h_0 .. h_{m-1}.
  const Eigen::MatrixXd all = encode_journey(encoder, ep.actions);
  ep.h = all.topRows(all.rows() - 1);
  return ep;
}

ValueParams fit_episodes(std::span<const EpisodeStates> episodes, const ValueConfig& cfg,
                         const RewardMap& rewards, int history_dim, int n_actions,
                         uint64_t encoder_fingerprint, ValueTrainLog* log) {
  throw_if_invalid(cfg);
  ValueParams params = ValueParams::init(cfg, history_dim, n_actions, encoder_fingerprint);

  std::vector<std::pair<uint32_t, uint32_t>> transitions;  // (episode, t)
  for (size_t e = 0; e < episodes.size(); ++e) {
    const auto m = episodes[e].actions.size();
    if (m < 2) continue;
    if (episodes[e].h.cols() != history_dim) {
      throw std::runtime_error("fit_episodes: episode history dimension mismatch");
    }
    for (size_t t = 0; t + 1 < m; ++t) {
      transitions.emplace_back(static_cast<uint32_t>(e), static_cast<uint32_t>(t));
    }
  }
  if (transitions.empty()) throw std::runtime_error("fit_episodes: no transitions to learn from");

  SweepMonitor monitor(cfg, log);
  StateRep s, next;
  std::vector<std::pair<double, ValueGradient>> batch;  // (alpha * td, grad)
  auto flush = [&]() {
    for (const auto& [coeff, grad] : batch) apply_gradient(params, grad, coeff);
    batch.clear();
  };
  for (int sweep = 1; sweep <= cfg.sweeps; ++sweep) {
    {
      Rng rng(derive_seed(cfg.seed, "value-sweep", static_cast<uint64_t>(sweep)));
      rng.shuffle(transitions);
    }
    double abs_td = 0;
    for (const auto& [e, t] : transitions) {
      const EpisodeStates& ep = episodes[e];
      s.history = ep.h.row(t).transpose();
      s.action = ep.actions[t];
      next.history = ep.h.row(t + 1).transpose();
      next.action = ep.actions[t + 1];
      const bool terminal =
          cfg.terminal_bootstrap && (static_cast<size_t>(t) + 2 == ep.actions.size());
      if (cfg.batch_size == 1) {
        abs_td += std::abs(td_update(params, s, next, terminal, rewards).td_error);
      } else {
        // Batched variant: TD errors evaluated against frozen parameters,
        // the accumulated semi-gradient steps applied together.
        const double bootstrap = terminal ? 0.0 : value(params, next);
        const double td =
            rewards.reward(next.action) + cfg.gamma * bootstrap - value(params, s);
        if (!std::isfinite(td)) {
          throw std::runtime_error("fit_episodes: non-finite TD error in batched sweep " +
                                   std::to_string(sweep));
        }
        abs_td += std::abs(td);
        const double alpha = next_alpha(params, s.action);
        batch.emplace_back(alpha * td, value_gradient(params, s));
        if (static_cast<int>(batch.size()) >= cfg.batch_size) flush();
      }
    }
    flush();
    if (monitor.record(sweep, abs_td / static_cast<double>(transitions.size()))) break;
  }
  monitor.finish();
  return params;
}

ValueParams train_values(const Dataset& dataset, const EncoderParams& encoder,
                         const ValueConfig& cfg, const RewardMap& rewards,
                         ValueTrainLog* log) {
  if (dataset.train.empty()) throw std::runtime_error("train_values: empty training set");
  if (encoder.vocab_fingerprint != dataset.vocab.fingerprint()) {
    throw std::runtime_error("train_values: encoder was trained against a different vocabulary");
  }
  if (rewards.size() != dataset.vocab.size()) {
    throw std::runtime_error("train_values: reward map size does not match vocabulary");
  }
  std::vector<EpisodeStates> episodes;
  episodes.reserve(dataset.train.size());
  for (const auto& jny : dataset.train) {
    if (jny.length() < 2) {
      throw std::runtime_error("train_values: journey " + jny.journey_id + " has length < 2");
    }
    episodes.push_back(episode_states(encoder, jny));
  }
  return fit_episodes(episodes, cfg, rewards, encoder.config.hidden_dim, dataset.vocab.size(),
                      encoder.fingerprint(), log);
}

ValueParams fit_mrp_stream(const TabularMRP& mrp, const ValueConfig& cfg, int sweeps,
                           int transitions_per_sweep, ValueTrainLog* log) {
  mrp.validate();
  throw_if_invalid(cfg);
  if (sweeps < 1 || transitions_per_sweep < 1) {
    throw std::runtime_error("fit_mrp_stream: sweeps and transitions_per_sweep must be >= 1");
  }
  if (cfg.gamma != mrp.gamma) {
    throw std::runtime_error("fit_mrp_stream: config gamma " + std::to_string(cfg.gamma) +
                             " differs from the MRP gamma " + std::to_string(mrp.gamma));
  }
  ValueParams params = ValueParams::init(cfg, 0, mrp.n_states, 0);
  const RewardMap rewards = RewardMap::from_vector(mrp.r);

  SweepMonitor monitor(cfg, log);
  StateRep s{Eigen::VectorXd(0), 0};
  StateRep next{Eigen::VectorXd(0), 0};
  for (int sweep = 1; sweep <= sweeps; ++sweep) {
    Rng rng(derive_seed(cfg.seed, "mrp-stream", static_cast<uint64_t>(sweep)));
    int state = static_cast<int>(rng.below(static_cast<uint64_t>(mrp.n_states)));
    double abs_td = 0;
    for (int k = 0; k < transitions_per_sweep; ++k) {
      const int succ =
          static_cast<int>(rng.categorical(mrp.p[static_cast<size_t>(state)]));
      s.action = state;
      next.action = succ;
      abs_td += std::abs(td_update(params, s, next, /*next_terminal=*/false, rewards).td_error);
      state = succ;
    }
    if (monitor.record(sweep, abs_td / transitions_per_sweep)) break;
  }
  monitor.finish();
  return params;
}

std::vector<double> score_journey(const EncoderParams& encoder, const ValueParams& values,
                                  const Journey& journey) {
  if (journey.events.empty()) throw std::runtime_error("score_journey: empty journey");
  if (values.history_dim != encoder.config.hidden_dim) {
    throw std::runtime_error("score_journey: value estimator expects history dimension " +
                             std::to_string(values.history_dim) + ", encoder produces " +
                             std::to_string(encoder.config.hidden_dim));
  }
  if (values.encoder_fingerprint != 0 && values.encoder_fingerprint != encoder.fingerprint()) {
    throw std::runtime_error("score_journey: value checkpoint was trained with a different encoder");
  }

  std::vector<int> actions;
  actions.reserve(journey.events.size());
  for (const auto& ev : journey.events) {
    if (ev.action < 0 || ev.action >= values.n_actions) {
      throw std::runtime_error("score_journey: action index outside the estimator vocabulary");
    }
    actions.push_back(ev.action);
  }
  const Eigen::MatrixXd hs = encode_journey(encoder, actions);

  std::vector<double> y(actions.size());
  StateRep s;
  for (size_t t = 0; t < actions.size(); ++t) {
    s.history = hs.row(static_cast<Eigen::Index>(t)).transpose();
    s.action = actions[t];
    y[t] = value(values, s);
  }
  return y;
}

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<size_t>(i)].get<double>();
  return v;
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from(const json& j) {
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = j[static_cast<size_t>(i)][static_cast<size_t>(c)].get<double>();
    }
  }
  return m;
}

}  // namespace

void ValueParams::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "clickval-value";
  j["version"] = 1;
  json c;
  c["gamma"] = config.gamma;
  c["alpha"] = config.alpha;
  c["alpha_decay"] = config.alpha_decay;
  c["estimator"] = std::string(to_string(config.estimator));
  c["mlp_width"] = config.mlp_width;
  c["sweeps"] = config.sweeps;
  c["batch_size"] = config.batch_size;
  c["terminal_bootstrap"] = config.terminal_bootstrap;
  c["stop_tol"] = config.stop_tol;
  c["stop_patience"] = config.stop_patience;
  c["seed"] = config.seed;
  j["config"] = c;
  j["history_dim"] = history_dim;
  j["n_actions"] = n_actions;
  j["encoder_fingerprint"] = encoder_fingerprint;
  json w;
  w["table"] = vec_json(table);
  w["w"] = vec_json(this->w);
  w["b"] = b;
  w["w1"] = mat_json(w1);
  w["b1"] = vec_json(b1);
  w["w2"] = vec_json(w2);
  w["b2"] = b2;
  j["weights"] = w;
  write_file_atomic(path, j.dump());
}

ValueParams ValueParams::load(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  if (j.value("format", "") != "clickval-value") {
    throw std::runtime_error(path.string() + ": not a value checkpoint");
  }
  ValueParams p;
  const json& c = require_key(j, "config", "value checkpoint");
  p.config.gamma = c.at("gamma").get<double>();
  p.config.alpha = c.at("alpha").get<double>();
  p.config.alpha_decay = c.value("alpha_decay", 0.0);
  const std::string est = c.at("estimator").get<std::string>();
  if (est == "tabular") {
    p.config.estimator = EstimatorKind::kTabular;
  } else if (est == "linear") {
    p.config.estimator = EstimatorKind::kLinear;
  } else if (est == "one-hidden-layer") {
    p.config.estimator = EstimatorKind::kMlp;
  } else {
    throw std::runtime_error(path.string() + ": unknown estimator \"" + est + "\"");
  }
  p.config.mlp_width = c.value("mlp_width", 64);
  p.config.sweeps = c.value("sweeps", 50);
  p.config.batch_size = c.value("batch_size", 1);
  p.config.terminal_bootstrap = c.value("terminal_bootstrap", true);
  p.config.stop_tol = c.value("stop_tol", 1e-4);
  p.config.stop_patience = c.value("stop_patience", 3);
  p.config.seed = c.value("seed", uint64_t{1});
  p.history_dim = require_key(j, "history_dim", "value checkpoint").get<int>();
  p.n_actions = require_key(j, "n_actions", "value checkpoint").get<int>();
  p.encoder_fingerprint =
      require_key(j, "encoder_fingerprint", "value checkpoint").get<uint64_t>();
  const json& w = require_key(j, "weights", "value checkpoint");
  p.table = vec_from(w.at("table"));
  p.w = vec_from(w.at("w"));
  p.b = w.at("b").get<double>();
  p.w1 = mat_from(w.at("w1"));
  p.b1 = vec_from(w.at("b1"));
  p.w2 = vec_from(w.at("w2"));
  p.b2 = w.at("b2").get<double>();
  p.visit_count = Eigen::VectorXd::Zero(p.n_actions);
  return p;
}

}  // namespace clickval

#include "clickval/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clickval/io.hpp"
#include "clickval/rng.hpp"
#include "json_util.hpp"

namespace clickval {

std::string_view to_string(CellKind c) {
  return c == CellKind::kBasic ? "basic" : "gated";
}

void EncoderConfig::validate(std::vector<std::string>& errors) const {
  if (embed_dim <= 0) errors.push_back("encoder.embed_dim must be positive");
  if (hidden_dim <= 0) errors.push_back("encoder.hidden_dim must be positive");
  if (!(learning_rate > 0)) errors.push_back("encoder.learning_rate must be positive");
  if (batch_size <= 0) errors.push_back("encoder.batch_size must be positive");
  if (max_epochs <= 0) errors.push_back("encoder.max_epochs must be positive");
  if (early_stop_patience < 1) errors.push_back("encoder.early_stop_patience must be >= 1");
  if (!(heldout_fraction >= 0.0 && heldout_fraction <= 0.5)) {
    errors.push_back("encoder.heldout_fraction must be in [0, 0.5]");
  }
  if (clip_norm < 0) errors.push_back("encoder.clip_norm must be nonnegative");
}

namespace {

int gate_rows(const EncoderConfig& cfg) {
  return cfg.cell == CellKind::kGated ? 4 * cfg.hidden_dim : cfg.hidden_dim;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(Eigen::MatrixXd& m, Rng& rng, double lo, double hi) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
}

void check_action(const EncoderParams& p, int action) {
  if (action < 0 || action >= p.vocab_size()) {
    throw std::out_of_range("encoder: action index " + std::to_string(action) +
                            " outside vocabulary of size " + std::to_string(p.vocab_size()));
  }
}

uint64_t hash_matrix(const Eigen::MatrixXd& m, uint64_t h) {
  return fnv1a_bytes(m.data(), sizeof(double) * static_cast<size_t>(m.size()), h);
}
uint64_t hash_vector(const Eigen::VectorXd& v, uint64_t h) {
  return fnv1a_bytes(v.data(), sizeof(double) * static_cast<size_t>(v.size()), h);
}

}  // namespace

uint64_t EncoderParams::fingerprint() const {
  std::string cfg_tag = std::to_string(config.embed_dim) + "/" + std::to_string(config.hidden_dim) +
                        "/" + std::string(to_string(config.cell));
  uint64_t h = fnv1a(cfg_tag);
  h = fnv1a_bytes(&vocab_fingerprint, sizeof(vocab_fingerprint), h);
  h = hash_matrix(embedding, h);
  h = hash_matrix(w_in, h);
  h = hash_matrix(w_rec, h);
  h = hash_vector(bias, h);
  h = hash_matrix(w_out, h);
  h = hash_vector(b_out, h);
  return h;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, const ActionVocab& vocab) {
  std::vector<std::string> errors;
  cfg.validate(errors);
  if (!errors.empty()) {
    std::string msg = "invalid encoder config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
  const int a = vocab.size();
  const int g = gate_rows(cfg);
  EncoderParams p;
  p.config = cfg;
  p.vocab_fingerprint = vocab.fingerprint();
  p.embedding.resize(a, cfg.embed_dim);
  p.w_in.resize(g, cfg.embed_dim);
  p.w_rec.resize(g, cfg.hidden_dim);
  p.bias = Eigen::VectorXd::Zero(g);
  p.w_out.resize(a, cfg.hidden_dim);
  p.b_out = Eigen::VectorXd::Zero(a);

  Rng rng(derive_seed(cfg.seed, "encoder-init"));
  fill_uniform(p.embedding, rng, -0.05, 0.05);
  fill_uniform(p.w_in, rng, -0.05, 0.05);
  fill_uniform(p.w_rec, rng, -0.05, 0.05);
  fill_uniform(p.w_out, rng, -0.05, 0.05);
  return p;
}

EncoderState initial_state(const EncoderParams& params) {
  EncoderState s;
  s.h = Eigen::VectorXd::Zero(params.config.hidden_dim);
  s.c = Eigen::VectorXd::Zero(params.config.hidden_dim);
  return s;
}

EncoderState encode_step(const EncoderParams& params, const EncoderState& prev, int action) {
  check_action(params, action);
  const int hd = params.config.hidden_dim;
  const Eigen::VectorXd x = params.embedding.row(action).transpose();
  Eigen::VectorXd z = params.w_in * x + params.w_rec * prev.h + params.bias;

  EncoderState next;
  if (params.config.cell == CellKind::kBasic) {
    next.h = z.array().tanh().matrix();
    next.c = Eigen::VectorXd::Zero(hd);
    return next;
  }
  Eigen::ArrayXd i = z.segment(0, hd).array().unaryExpr([](double v) { return sigmoid(v); });
  Eigen::ArrayXd f = z.segment(hd, hd).array().unaryExpr([](double v) { return sigmoid(v); });
  Eigen::ArrayXd g = z.segment(2 * hd, hd).array().tanh();
  Eigen::ArrayXd o = z.segment(3 * hd, hd).array().unaryExpr([](double v) { return sigmoid(v); });
  next.c = (f * prev.c.array() + i * g).matrix();
  next.h = (o * next.c.array().tanh()).matrix();
  return next;
}

Eigen::VectorXd next_action_logits(const EncoderParams& params, const Eigen::VectorXd& h) {
  if (h.size() != params.config.hidden_dim) {
    throw std::invalid_argument("next_action_logits: history vector has dimension " +
                                std::to_string(h.size()) + ", expected " +
                                std::to_string(params.config.hidden_dim));
  }
  return params.w_out * h + params.b_out;
}

Eigen::MatrixXd encode_journey(const EncoderParams& params, std::span<const int> actions) {
  const int hd = params.config.hidden_dim;
  Eigen::MatrixXd hs(static_cast<Eigen::Index>(actions.size()) + 1, hd);
  EncoderState state = initial_state(params);
  hs.row(0).setZero();
  for (size_t t = 0; t < actions.size(); ++t) {
    state = encode_step(params, state, actions[t]);
    hs.row(static_cast<Eigen::Index>(t) + 1) = state.h.transpose();
  }
  return hs;
}

EncoderGradients EncoderGradients::zeros_like(const EncoderParams& p) {
  EncoderGradients g;
  g.embedding = Eigen::MatrixXd::Zero(p.embedding.rows(), p.embedding.cols());
  g.w_in = Eigen::MatrixXd::Zero(p.w_in.rows(), p.w_in.cols());
  g.w_rec = Eigen::MatrixXd::Zero(p.w_rec.rows(), p.w_rec.cols());
  g.bias = Eigen::VectorXd::Zero(p.bias.size());
  g.w_out = Eigen::MatrixXd::Zero(p.w_out.rows(), p.w_out.cols());
  g.b_out = Eigen::VectorXd::Zero(p.b_out.size());
  return g;
}

void EncoderGradients::add_scaled(const EncoderGradients& other, double scale) {
  embedding += scale * other.embedding;
  w_in += scale * other.w_in;
  w_rec += scale * other.w_rec;
  bias += scale * other.bias;
  w_out += scale * other.w_out;
  b_out += scale * other.b_out;
}

double EncoderGradients::squared_norm() const {
  return embedding.squaredNorm() + w_in.squaredNorm() + w_rec.squaredNorm() +
         bias.squaredNorm() + w_out.squaredNorm() + b_out.squaredNorm();
}

namespace {

void apply_gradient(EncoderParams& p, const EncoderGradients& g, double coeff) {
  p.embedding += coeff * g.embedding;
  p.w_in += coeff * g.w_in;
  p.w_rec += coeff * g.w_rec;
  p.bias += coeff * g.bias;
  p.w_out += coeff * g.w_out;
  p.b_out += coeff * g.b_out;
}

struct StepTrace {
  Eigen::VectorXd i, f, g, o;  // gate activations (gated cell)
  Eigen::VectorXd pre;         // pre-activation (basic cell)
  Eigen::VectorXd c, tanh_c, h;
  Eigen::VectorXd probs;
};

}  // namespace

SequenceLoss sequence_loss(const EncoderParams& params, std::span<const int> actions,
                           EncoderGradients* grads) {
  SequenceLoss out;
  if (actions.size() < 2) return out;
  const int hd = params.config.hidden_dim;
  const bool gated = params.config.cell == CellKind::kGated;
  const auto steps = actions.size() - 1;  // inputs actions[0..m-2]

  // Forward, keeping what backward needs.
  std::vector<StepTrace> trace(steps);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(hd);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(hd);
  for (size_t t = 0; t < steps; ++t) {
    check_action(params, actions[t]);
    check_action(params, actions[t + 1]);
    StepTrace& st = trace[t];
    const Eigen::VectorXd x = params.embedding.row(actions[t]).transpose();
    Eigen::VectorXd z = params.w_in * x + params.w_rec * h_prev + params.bias;
    if (gated) {
      st.i = z.segment(0, hd).unaryExpr([](double v) { return sigmoid(v); });
      st.f = z.segment(hd, hd).unaryExpr([](double v) { return sigmoid(v); });
      st.g = z.segment(2 * hd, hd).array().tanh().matrix();
      st.o = z.segment(3 * hd, hd).unaryExpr([](double v) { return sigmoid(v); });
      st.c = (st.f.array() * c_prev.array() + st.i.array() * st.g.array()).matrix();
      st.tanh_c = st.c.array().tanh().matrix();
      st.h = (st.o.array() * st.tanh_c.array()).matrix();
    } else {
      st.pre = z;
      st.h = z.array().tanh().matrix();
    }

    Eigen::VectorXd logits = params.w_out * st.h + params.b_out;
    const double zmax = logits.maxCoeff();
    Eigen::VectorXd ex = (logits.array() - zmax).exp();
    const double denom = ex.sum();
    st.probs = ex / denom;
    out.nll_sum += -(logits(actions[t + 1]) - zmax - std::log(denom));
    ++out.n_predictions;

    if (gated) c_prev = st.c;
    h_prev = st.h;
  }

  if (grads == nullptr) return out;

  // Backward through time.
  Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(hd);
  Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(hd);
  for (size_t t = steps; t-- > 0;) {
    const StepTrace& st = trace[t];
    const Eigen::VectorXd h_before =
        t == 0 ? Eigen::VectorXd::Zero(hd).eval() : trace[t - 1].h;
    const Eigen::VectorXd c_before =
        (!gated || t == 0) ? Eigen::VectorXd::Zero(hd).eval() : trace[t - 1].c;

    Eigen::VectorXd dlogits = st.probs;
    dlogits(actions[t + 1]) -= 1.0;

    grads->w_out += dlogits * st.h.transpose();
    grads->b_out += dlogits;

    Eigen::VectorXd dh = params.w_out.transpose() * dlogits + dh_carry;
    Eigen::VectorXd dz(gated ? 4 * hd : hd);
    if (gated) {
      Eigen::ArrayXd do_ = dh.array() * st.tanh_c.array();
      Eigen::ArrayXd dc = dh.array() * st.o.array() * (1.0 - st.tanh_c.array().square()) +
                          dc_carry.array();
      Eigen::ArrayXd di = dc * st.g.array();
      Eigen::ArrayXd dg = dc * st.i.array();
      Eigen::ArrayXd df = dc * c_before.array();
      dc_carry = (dc * st.f.array()).matrix();

      dz.segment(0, hd) = (di * st.i.array() * (1.0 - st.i.array())).matrix();
      dz.segment(hd, hd) = (df * st.f.array() * (1.0 - st.f.array())).matrix();
      dz.segment(2 * hd, hd) = (dg * (1.0 - st.g.array().square())).matrix();
      dz.segment(3 * hd, hd) = (do_ * st.o.array() * (1.0 - st.o.array())).matrix();
    } else {
      dz = (dh.array() * (1.0 - st.h.array().square())).matrix();
    }

    const Eigen::VectorXd x = params.embedding.row(actions[t]).transpose();
    grads->w_in += dz * x.transpose();
    grads->w_rec += dz * h_before.transpose();
    grads->bias += dz;
    grads->embedding.row(actions[t]) += (params.w_in.transpose() * dz).transpose();
    dh_carry = params.w_rec.transpose() * dz;
  }
  return out;
}

double corpus_cross_entropy(const EncoderParams& params, std::span<const Journey> journeys) {
  double nll = 0;
  int64_t n = 0;
  std::vector<int> actions;
  for (const auto& jny : journeys) {
    actions.clear();
    for (const auto& ev : jny.events) actions.push_back(ev.action);
    const SequenceLoss l = sequence_loss(params, actions, nullptr);
    nll += l.nll_sum;
    n += l.n_predictions;
  }
  if (n == 0) throw std::runtime_error("corpus_cross_entropy: no predictable transitions");
  return nll / static_cast<double>(n);
}

std::string EncoderTrainLog::to_csv() const {
  std::string out = "epoch,train_ce,heldout_ce,best_heldout_ce\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_ce) + "," +
           format_double(e.heldout_ce) + "," + format_double(e.best_heldout_ce) + "\n";
  }
  return out;
}

EncoderParams train_encoder(const Dataset& dataset, const EncoderConfig& cfg,
                            EncoderTrainLog* log) {
  if (dataset.train.empty()) throw std::runtime_error("train_encoder: empty training set");
  for (const auto& jny : dataset.train) {
    if (jny.length() < 2) {
      throw std::runtime_error("train_encoder: journey " + jny.journey_id +
                               " has length < 2, nothing to predict");
    }
  }

  EncoderParams params = EncoderParams::init(cfg, dataset.vocab);

  // Carve the stopping slice off the training set.
  std::vector<size_t> order(dataset.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  {
    Rng rng(derive_seed(cfg.seed, "encoder-heldout"));
    rng.shuffle(order);
  }
  const auto n_heldout =
      static_cast<size_t>(cfg.heldout_fraction * static_cast<double>(order.size()));
  std::vector<Journey> heldout;
  std::vector<const Journey*> pool;
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < n_heldout) {
      heldout.push_back(dataset.train[order[i]]);
    } else {
      pool.push_back(&dataset.train[order[i]]);
    }
  }
  if (pool.empty()) throw std::runtime_error("train_encoder: held-out slice consumed all journeys");

  auto stopping_ce = [&](const EncoderParams& p) {
    return heldout.empty()
               ? corpus_cross_entropy(p, dataset.train)
               : corpus_cross_entropy(p, heldout);
  };

  EncoderParams best = params;
  double best_ce = stopping_ce(params);
  int best_epoch = 0;
  int stale_epochs = 0;

  std::vector<int> actions;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    {
      Rng rng(derive_seed(cfg.seed, "encoder-epoch", static_cast<uint64_t>(epoch)));
      rng.shuffle(pool);
    }
    double epoch_nll = 0;
    int64_t epoch_tokens = 0;
    EncoderGradients acc = EncoderGradients::zeros_like(params);
    size_t batch_fill = 0;
    int64_t batch_tokens = 0;

    auto flush_batch = [&](size_t journey_index) {
      if (batch_tokens == 0) return;
      double inv = 1.0 / static_cast<double>(batch_tokens);
      if (cfg.clip_norm > 0) {
        const double norm = std::sqrt(acc.squared_norm()) * inv;
        if (norm > cfg.clip_norm) inv *= cfg.clip_norm / norm;
      }
      apply_gradient(params, acc, -cfg.learning_rate * inv);
      if (!params.embedding.allFinite() || !params.w_rec.allFinite()) {
        throw std::runtime_error("train_encoder: non-finite parameters at epoch " +
                                 std::to_string(epoch) + ", journey " +
                                 std::to_string(journey_index));
      }
      acc = EncoderGradients::zeros_like(params);
      batch_fill = 0;
      batch_tokens = 0;
    };

    for (size_t k = 0; k < pool.size(); ++k) {
      actions.clear();
      for (const auto& ev : pool[k]->events) actions.push_back(ev.action);
      const SequenceLoss l = sequence_loss(params, actions, &acc);
      if (!std::isfinite(l.nll_sum)) {
        throw std::runtime_error("train_encoder: NaN loss at epoch " + std::to_string(epoch) +
                                 ", journey " + pool[k]->journey_id);
      }
      epoch_nll += l.nll_sum;
      epoch_tokens += l.n_predictions;
      batch_tokens += l.n_predictions;
      if (++batch_fill == static_cast<size_t>(cfg.batch_size)) flush_batch(k);
    }
    flush_batch(pool.size());

    const double train_ce = epoch_nll / static_cast<double>(epoch_tokens);
    const double heldout_ce = stopping_ce(params);

    if (heldout_ce + 1e-4 < best_ce) {
      stale_epochs = 0;
    } else {
      ++stale_epochs;
    }
    if (heldout_ce < best_ce) {
      best_ce = heldout_ce;
      best = params;
      best_epoch = epoch;
    }
    if (log) log->epochs.push_back({epoch, train_ce, heldout_ce, best_ce});
    if (stale_epochs >= cfg.early_stop_patience) break;
  }

  if (log) log->best_epoch = best_epoch;
  return best;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw std::runtime_error("checkpoint: " + name + " is not a matrix");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<size_t>(i)].size()) != cols) {
      throw std::runtime_error("checkpoint: ragged matrix " + name);
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = j[static_cast<size_t>(i)][static_cast<size_t>(c)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw std::runtime_error("checkpoint: " + name + " is not a vector");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<size_t>(i)].get<double>();
  return v;
}

}  // namespace

void EncoderParams::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "clickval-encoder";
  j["version"] = 1;
  json c;
  c["embed_dim"] = config.embed_dim;
  c["hidden_dim"] = config.hidden_dim;
  c["cell"] = std::string(to_string(config.cell));
  c["learning_rate"] = config.learning_rate;
  c["batch_size"] = config.batch_size;
  c["max_epochs"] = config.max_epochs;
  c["early_stop_patience"] = config.early_stop_patience;
  c["heldout_fraction"] = config.heldout_fraction;
  c["clip_norm"] = config.clip_norm;
  c["seed"] = config.seed;
  j["config"] = c;
  j["vocab_fingerprint"] = vocab_fingerprint;
  json w;
  w["embedding"] = matrix_to_json(embedding);
  w["w_in"] = matrix_to_json(w_in);
  w["w_rec"] = matrix_to_json(w_rec);
  w["bias"] = vector_to_json(bias);
  w["w_out"] = matrix_to_json(w_out);
  w["b_out"] = vector_to_json(b_out);
  j["weights"] = w;
  write_file_atomic(path, j.dump());
}

EncoderParams EncoderParams::load(const std::filesystem::path& path,
                                  const ActionVocab* expect_vocab) {
  const json j = load_json_file(path);
  if (j.value("format", "") != "clickval-encoder") {
    throw std::runtime_error(path.string() + ": not an encoder checkpoint");
  }
  EncoderParams p;
  const json& c = require_key(j, "config", "encoder checkpoint");
  p.config.embed_dim = c.at("embed_dim").get<int>();
  p.config.hidden_dim = c.at("hidden_dim").get<int>();
  const std::string cell = c.at("cell").get<std::string>();
  if (cell == "basic") {
    p.config.cell = CellKind::kBasic;
  } else if (cell == "gated") {
    p.config.cell = CellKind::kGated;
  } else {
    throw std::runtime_error(path.string() + ": unknown cell kind \"" + cell + "\"");
  }
  p.config.learning_rate = c.value("learning_rate", 0.5);
  p.config.batch_size = c.value("batch_size", 16);
  p.config.max_epochs = c.value("max_epochs", 20);
  p.config.early_stop_patience = c.value("early_stop_patience", 3);
  p.config.heldout_fraction = c.value("heldout_fraction", 0.1);
  p.config.clip_norm = c.value("clip_norm", 5.0);
  p.config.seed = c.value("seed", uint64_t{1});
  p.vocab_fingerprint = require_key(j, "vocab_fingerprint", "encoder checkpoint").get<uint64_t>();

  const json& w = require_key(j, "weights", "encoder checkpoint");
  p.embedding = matrix_from_json(w.at("embedding"), "embedding");
  p.w_in = matrix_from_json(w.at("w_in"), "w_in");
  p.w_rec = matrix_from_json(w.at("w_rec"), "w_rec");
  p.bias = vector_from_json(w.at("bias"), "bias");
  p.w_out = matrix_from_json(w.at("w_out"), "w_out");
  p.b_out = vector_from_json(w.at("b_out"), "b_out");

  const int g = gate_rows(p.config);
  if (p.embedding.cols() != p.config.embed_dim || p.w_in.rows() != g ||
      p.w_in.cols() != p.config.embed_dim || p.w_rec.rows() != g ||
      p.w_rec.cols() != p.config.hidden_dim || p.bias.size() != g ||
      p.w_out.cols() != p.config.hidden_dim || p.w_out.rows() != p.embedding.rows() ||
      p.b_out.size() != p.embedding.rows()) {
    throw std::runtime_error(path.string() + ": checkpoint weight shapes are inconsistent");
  }
  if (expect_vocab && expect_vocab->fingerprint() != p.vocab_fingerprint) {
    throw std::runtime_error(path.string() +
                             ": checkpoint was trained against a different vocabulary");
  }
  return p;
}

}  // namespace clickval

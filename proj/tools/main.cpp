#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "clickval/curate.hpp"
#include "clickval/encoder.hpp"
#include "clickval/eval.hpp"
#include "clickval/ingest.hpp"
#include "clickval/io.hpp"
#include "clickval/metrics.hpp"
#include "clickval/mrp.hpp"
#include "clickval/rng.hpp"
#include "clickval/sim.hpp"
#include "clickval/value.hpp"
#include "config_io.hpp"

namespace fs = std::filesystem;
using namespace clickval;
using cli::json;
using cli::RunConfig;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;  // 0: take the config's seed
  int threads = 1;
  bool json_errors = false;
};

RunConfig load_config(const CommonArgs& common) {
  RunConfig cfg = cli::load_run_config(
      common.config_path.empty() ? fs::path() : fs::path(common.config_path));
  if (common.seed != 0) cfg.seed = common.seed;
  return cfg;
}

/// Every run drops a manifest next to its artifacts: config hash, seed,
/// input hashes and the artifact list, enough to reproduce the run.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg) : command_(std::move(command)) {
    seed_ = cfg.seed;
    config_hash_ = fnv1a(cfg.raw.dump());
  }

  void add_input(const fs::path& path) {
    inputs_[path.string()] = fnv1a_file(path);
  }
  void add_input_dir(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add_input(f);
  }
  void add_artifact(const fs::path& path) { artifacts_.push_back(path.filename().string()); }

  void write(const fs::path& out_path) const {
    json j;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config_hash"] = config_hash_;
    json inputs = json::object();
    for (const auto& [path, hash] : inputs_) inputs[path] = hash;
    j["inputs"] = inputs;
    j["artifacts"] = artifacts_;
    write_file_atomic(out_path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  uint64_t seed_ = 0;
  uint64_t config_hash_ = 0;
  std::map<std::string, uint64_t> inputs_;
  std::vector<std::string> artifacts_;
};

std::vector<const Journey*> split_journeys(const Dataset& ds, const std::string& split) {
  std::vector<const Journey*> out;
  if (split == "train" || split == "all") {
    for (const auto& j : ds.train) out.push_back(&j);
  }
  if (split == "test" || split == "all") {
    for (const auto& j : ds.test) out.push_back(&j);
  }
  if (out.empty() && split != "train" && split != "test" && split != "all") {
    throw std::runtime_error("unknown split \"" + split + "\"; expected train, test or all");
  }
  return out;
}

std::string traces_csv(const std::vector<const Journey*>& journeys,
                       const std::vector<std::vector<double>>& ys, const ActionVocab& vocab) {
  std::string out = "customer_id,journey_id,t,action,y\n";
  for (size_t k = 0; k < journeys.size(); ++k) {
    const Journey& j = *journeys[k];
    for (int t = 0; t < j.length(); ++t) {
      out += csv_field(j.customer_id) + "," + csv_field(j.journey_id) + "," +
             std::to_string(t + 1) + "," +
             csv_field(vocab.label(j.events[static_cast<size_t>(t)].action)) + "," +
             format_double(ys[k][static_cast<size_t>(t)]) + "\n";
    }
  }
  return out;
}

std::map<std::string, std::vector<double>> load_traces_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open traces file: " + path.string());
  std::map<std::string, std::vector<double>> traces;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty traces file: " + path.string());
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = parse_csv_line(line);
    if (fields.size() != 5) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 5 CSV fields");
    }
    const int t = std::stoi(fields[2]);
    auto& y = traces[fields[1]];
    if (static_cast<int>(y.size()) + 1 != t) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": trace rows for journey " + fields[1] + " are not in t order");
    }
    y.push_back(std::stod(fields[4]));
  }
  return traces;
}

/// Traces for a journey list, in list order; missing journeys are an error.
std::vector<ProxyTrace> align_traces(const std::vector<const Journey*>& journeys,
                                     const std::map<std::string, std::vector<double>>& by_id) {
  std::vector<ProxyTrace> out;
  std::vector<std::string> missing;
  for (const Journey* j : journeys) {
    auto it = by_id.find(j->journey_id);
    if (it == by_id.end()) {
      missing.push_back(j->journey_id);
      continue;
    }
    ProxyTrace t;
    t.journey_ref = j->journey_id;
    t.y = it->second;
    out.push_back(std::move(t));
  }
  if (!missing.empty()) {
    std::string msg = "traces file is missing " + std::to_string(missing.size()) +
                      " journeys of the requested split, e.g. " + missing.front();
    throw std::runtime_error(msg);
  }
  return out;
}

std::vector<std::vector<double>> score_all(const EncoderParams& enc, const ValueParams& vals,
                                           const std::vector<const Journey*>& journeys,
                                           int threads) {
  std::vector<std::vector<double>> ys(journeys.size());
  if (threads <= 1) {
    for (size_t k = 0; k < journeys.size(); ++k) ys[k] = score_journey(enc, vals, *journeys[k]);
    return ys;
  }
  // deterministic: output slot k is fixed regardless of scheduling
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      for (size_t k = next.fetch_add(1); k < journeys.size(); k = next.fetch_add(1)) {
        ys[k] = score_journey(enc, vals, *journeys[k]);
      }
    });
  }
  for (auto& th : pool) th.join();
  return ys;
}

json confusion_json(const ConfusionReport& r, int q, const std::string& split) {
  json j;
  j["q"] = q;
  j["split"] = split;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["tn"] = r.tn;
  j["fn"] = r.fn;
  j["used"] = r.used();
  j["accuracy"] = r.accuracy();
  j["precision"] = r.precision();
  j["recall"] = r.recall();
  j["f1"] = r.f1();
  j["excluded"] = {{"score5", r.excluded_score5},
                   {"short", r.excluded_short},
                   {"no_score", r.excluded_no_score}};
  return j;
}

std::string pairs_csv(const std::vector<PairReportRow>& rows) {
  std::string out = "source,target,stratum,n,z,ci95\n";
  for (const auto& r : rows) {
    out += csv_field(r.source) + "," + csv_field(r.target) + "," + r.stratum + "," +
           std::to_string(r.n) + "," + format_double(r.z) + "," + format_double(r.ci95) + "\n";
  }
  return out;
}

json distribution_json(const ZDistribution& dist) {
  json bins = json::array();
  for (const auto& b : dist.bins) {
    json bin;
    bin["min_len_exclusive"] = b.min_len;
    bin["max_len"] = b.max_len;
    bin["count"] = b.count;
    bin["histogram"] = b.histogram;
    bin["mass_below_0.4"] = b.mass_below;
    bin["mass_0.4_to_0.6"] = b.mass_mid;
    bin["mass_above_0.6"] = b.mass_above;
    bins.push_back(std::move(bin));
  }
  json j;
  j["histogram_buckets"] = dist.histogram_buckets;
  j["skipped_short"] = dist.skipped_short;
  j["bins"] = bins;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommand bodies (shared between the thin commands and `report`)
// ---------------------------------------------------------------------------

struct MetricsOptions {
  int64_t min_n = 1;
  bool exclude_survey_pairs = false;
  std::vector<int> length_bins = {25, 50, 75, 100};
};

void emit_metrics(const Dataset& ds, const std::vector<const Journey*>& journeys,
                  const std::vector<ProxyTrace>& traces, const MetricsOptions& opts,
                  const fs::path& out_dir, Manifest& manifest) {
  std::vector<Journey> js;
  js.reserve(journeys.size());
  for (const Journey* j : journeys) js.push_back(*j);

  // per-journey Z
  std::string zcsv = "customer_id,journey_id,length,z\n";
  for (size_t k = 0; k < js.size(); ++k) {
    if (traces[k].length() < 2) continue;
    zcsv += csv_field(js[k].customer_id) + "," + csv_field(js[k].journey_id) + "," +
            std::to_string(js[k].length()) + "," + format_double(z_per_journey(traces[k])) + "\n";
  }
  write_file_atomic(out_dir / "journey_z.csv", zcsv);
  manifest.add_artifact(out_dir / "journey_z.csv");

  auto matrices = pair_scores(js, traces, ds.vocab, /*stratify=*/true);
  if (opts.exclude_survey_pairs) {
    const int sid = ds.vocab.survey_id();
    for (auto& m : matrices) {
      for (int a = 0; a < m.n_actions; ++a) {
        m.n[static_cast<size_t>(sid) * m.n_actions + a] = 0;
        m.z_sum[static_cast<size_t>(sid) * m.n_actions + a] = 0;
        m.n[static_cast<size_t>(a) * m.n_actions + sid] = 0;
        m.z_sum[static_cast<size_t>(a) * m.n_actions + sid] = 0;
      }
    }
  }
  const auto rows = action_identification_report(matrices, ds.vocab, opts.min_n);
  write_file_atomic(out_dir / "pairs.csv", pairs_csv(rows));
  manifest.add_artifact(out_dir / "pairs.csv");

  json summary;
  for (const auto& m : matrices) summary["populated_cells"][m.stratum] = m.populated_cells();
  summary["journeys"] = js.size();
  summary["min_n"] = opts.min_n;
  write_file_atomic(out_dir / "metrics_summary.json", summary.dump(2) + "\n");
  manifest.add_artifact(out_dir / "metrics_summary.json");

  const ZDistribution dist = z_distribution(js, traces, opts.length_bins);
  write_file_atomic(out_dir / "z_distribution.json", distribution_json(dist).dump(2) + "\n");
  manifest.add_artifact(out_dir / "z_distribution.json");
}

struct SurveyData {
  std::vector<Journey> journeys;
  std::vector<ProxyTrace> traces;
};

SurveyData survey_subset(const std::vector<const Journey*>& journeys,
                         const std::vector<ProxyTrace>& traces) {
  SurveyData out;
  for (size_t k = 0; k < journeys.size(); ++k) {
    if (journeys[k]->survey_pos) {
      out.journeys.push_back(*journeys[k]);
      out.traces.push_back(traces[k]);
    }
  }
  return out;
}

json predict_split_json(const std::vector<const Journey*>& journeys,
                        const std::vector<ProxyTrace>& traces, const fs::path& out_dir,
                        const std::string& split, Manifest& manifest) {
  json out;
  std::vector<double> z_scores;
  std::vector<int> z_labels;
  for (size_t k = 0; k < journeys.size(); ++k) {
    if (traces[k].length() < 2) continue;
    z_scores.push_back(z_per_journey(traces[k]));
    z_labels.push_back(journeys[k]->has_purchase ? 1 : 0);
  }
  auto has_both = [](const std::vector<int>& labels) {
    bool pos = false, neg = false;
    for (int l : labels) (l ? pos : neg) = true;
    return pos && neg;
  };
  if (has_both(z_labels)) {
    out["z_auc"] = purchase_auc(z_scores, z_labels);
    std::string roc = "fpr,tpr,threshold\n";
    for (const auto& p : roc_points(z_scores, z_labels)) {
      roc += format_double(p.fpr) + "," + format_double(p.tpr) + "," +
             format_double(p.threshold) + "\n";
    }
    const fs::path roc_path = out_dir / ("roc_z_" + split + ".csv");
    write_file_atomic(roc_path, roc);
    manifest.add_artifact(roc_path);
  } else {
    out["z_auc"] = nullptr;
  }
  out["n_journeys"] = z_labels.size();

  // survey-score predictor, respondents only
  std::vector<double> sv_scores;
  std::vector<int> sv_labels;
  for (const Journey* j : journeys) {
    if (!j->survey_pos) continue;
    const auto& score = j->events[static_cast<size_t>(*j->survey_pos)].survey_score;
    if (!score) continue;
    sv_scores.push_back(static_cast<double>(*score));
    sv_labels.push_back(j->has_purchase ? 1 : 0);
  }
  if (has_both(sv_labels)) {
    out["survey_auc"] = purchase_auc(sv_scores, sv_labels);
    std::string roc = "fpr,tpr,threshold\n";
    for (const auto& p : roc_points(sv_scores, sv_labels)) {
      roc += format_double(p.fpr) + "," + format_double(p.tpr) + "," +
             format_double(p.threshold) + "\n";
    }
    const fs::path roc_path = out_dir / ("roc_survey_" + split + ".csv");
    write_file_atomic(roc_path, roc);
    manifest.add_artifact(roc_path);
  } else {
    out["survey_auc"] = nullptr;
  }
  out["n_respondents"] = sv_labels.size();
  return out;
}

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"clickval: proxy ratings of customer experience from clickstream logs"};
  app.require_subcommand(1);
  app.fallthrough(true);  // --seed and friends are valid after the subcommand

  CommonArgs common;
  app.add_option("--config", common.config_path, "run config JSON")->configurable(false);
  app.add_option("--seed", common.seed, "override the run seed");
  app.add_option("--threads", common.threads, "worker threads for read-only scoring")
      ->check(CLI::Range(1, 256));
  app.add_flag("--json-errors", common.json_errors, "report errors as JSON on stderr");

  // --- simulate ---
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic clickstream corpus");
  int sim_n = 1000;
  std::string sim_out;
  sim_cmd->add_option("--n", sim_n, "journeys to generate")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    SimConfig cfg;
    const json section = run.section("sim");
    if (section.empty()) {
      cfg = funnel_sim_config(20, derive_seed(run.seed, "sim"));
    } else {
      cfg = sim_config_from_json_text(section.dump());
      if (!section.contains("seed")) cfg.seed = derive_seed(run.seed, "sim");
    }
    const fs::path out_dir = sim_out;
    fs::create_directories(out_dir);
    const ActionVocab vocab = default_sim_vocab(cfg.vocab_size);
    const auto journeys = generate(cfg, sim_n);
    save_sim_events(journeys, vocab, out_dir / "events.jsonl", out_dir / "labels.jsonl");
    vocab.save(out_dir / "vocab.json");
    save_sim_config(cfg, out_dir / "sim_config.json");

    Manifest manifest("simulate", run);
    manifest.add_artifact(out_dir / "events.jsonl");
    manifest.add_artifact(out_dir / "labels.jsonl");
    manifest.add_artifact(out_dir / "vocab.json");
    manifest.add_artifact(out_dir / "sim_config.json");
    manifest.write(out_dir / "manifest.json");
    std::printf("simulate: %d journeys -> %s\n", sim_n, out_dir.string().c_str());
  });

  // --- ingest ---
  auto* ingest_cmd = app.add_subcommand("ingest", "parse an event log and stitch journeys");
  std::string ingest_vocab, ingest_input, ingest_out;
  int64_t gap_days = 30;
  ingest_cmd->add_option("--vocab", ingest_vocab, "vocab JSON")->required();
  ingest_cmd->add_option("--input", ingest_input, "events JSONL")->required();
  ingest_cmd->add_option("--out", ingest_out, "stitched journeys JSONL")->required();
  ingest_cmd->add_option("--gap-days", gap_days, "inactivity split threshold in days")
      ->check(CLI::PositiveNumber);
  ingest_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const ActionVocab vocab = ActionVocab::load(ingest_vocab);
    auto events = ingest_events(ingest_input, vocab);
    StitchOptions opts;
    opts.inactivity_gap_ms = gap_days * 24ll * 3600 * 1000;
    const auto journeys = stitch_journeys(std::move(events), vocab, opts);
    save_journeys_jsonl(journeys, vocab, ingest_out);

    Manifest manifest("ingest", run);
    manifest.add_input(ingest_vocab);
    manifest.add_input(ingest_input);
    manifest.add_artifact(ingest_out);
    manifest.write(fs::path(ingest_out).string() + ".manifest.json");
    std::printf("ingest: %zu journeys -> %s\n", journeys.size(), ingest_out.c_str());
  });

  // --- curate ---
  auto* curate_cmd = app.add_subcommand("curate", "filter, sample and split journeys");
  std::string curate_vocab, curate_journeys, curate_out;
  curate_cmd->add_option("--vocab", curate_vocab, "vocab JSON")->required();
  curate_cmd->add_option("--journeys", curate_journeys, "stitched journeys JSONL")->required();
  curate_cmd->add_option("--out", curate_out, "dataset directory")->required();
  int opt_min_len = -1, opt_max_len = -1;
  double opt_train_fraction = -1;
  curate_cmd->add_option("--min-len", opt_min_len, "length filter lower bound");
  curate_cmd->add_option("--max-len", opt_max_len, "length filter upper bound");
  curate_cmd->add_option("--train-fraction", opt_train_fraction, "train split fraction");
  curate_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    CurationConfig cfg = cli::curation_from(run);
    if (opt_min_len > 0) cfg.min_len = opt_min_len;
    if (opt_max_len > 0) cfg.max_len = opt_max_len;
    if (opt_train_fraction > 0) cfg.train_fraction = opt_train_fraction;

    const ActionVocab vocab = ActionVocab::load(curate_vocab);
    auto journeys = load_journeys_jsonl(curate_journeys, vocab);
    const Dataset ds = curate(std::move(journeys), vocab, cfg);
    save_dataset(ds, curate_out);
    if (!ds.stats.ratio_satisfied) {
      std::fprintf(stderr,
                   "curate: warning: purchase ratio %d:%d not met (purchase %d, no-purchase %d)\n",
                   cfg.purchase_ratio_num, cfg.purchase_ratio_den, ds.stats.n_purchase,
                   ds.stats.n_no_purchase);
    }

    Manifest manifest("curate", run);
    manifest.add_input(curate_vocab);
    manifest.add_input(curate_journeys);
    for (const char* name : {"vocab.json", "train.jsonl", "test.jsonl", "manifest.json"}) {
      manifest.add_artifact(fs::path(curate_out) / name);
    }
    manifest.write(fs::path(curate_out) / "run_manifest.json");
    std::printf("curate: train %d test %d -> %s\n", ds.stats.n_train, ds.stats.n_test,
                curate_out.c_str());
  });

  // --- train-encoder ---
  auto* tenc_cmd = app.add_subcommand("train-encoder", "fit the next-action encoder");
  std::string tenc_data, tenc_out, tenc_log;
  tenc_cmd->add_option("--data", tenc_data, "dataset directory")->required();
  tenc_cmd->add_option("--out", tenc_out, "encoder checkpoint path")->required();
  tenc_cmd->add_option("--log", tenc_log, "training log CSV");
  tenc_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const EncoderConfig cfg = cli::encoder_from(run);
    const Dataset ds = load_dataset(tenc_data);
    EncoderTrainLog log;
    const EncoderParams params = train_encoder(ds, cfg, &log);
    params.save(tenc_out);
    if (!tenc_log.empty()) write_file_atomic(tenc_log, log.to_csv());

    Manifest manifest("train-encoder", run);
    manifest.add_input_dir(tenc_data);
    manifest.add_artifact(tenc_out);
    manifest.write(fs::path(tenc_out).string() + ".manifest.json");
    std::printf("train-encoder: %zu epochs, best held-out ce %s -> %s\n", log.epochs.size(),
                format_double(log.epochs.empty() ? 0.0 : log.epochs.back().best_heldout_ce).c_str(),
                tenc_out.c_str());
  });

  // --- train-value ---
  auto* tval_cmd = app.add_subcommand("train-value", "fit the TD(0) value estimator");
  std::string tval_enc, tval_data, tval_out, tval_log, tval_estimator;
  double opt_gamma = -1, opt_alpha = -1;
  tval_cmd->add_option("--encoder", tval_enc, "encoder checkpoint")->required();
  tval_cmd->add_option("--data", tval_data, "dataset directory")->required();
  tval_cmd->add_option("--out", tval_out, "value checkpoint path")->required();
  tval_cmd->add_option("--log", tval_log, "convergence log CSV");
  tval_cmd->add_option("--gamma", opt_gamma, "discount factor in [0, 1)");
  tval_cmd->add_option("--alpha", opt_alpha, "TD learning rate");
  tval_cmd->add_option("--estimator", tval_estimator, "tabular | linear | one-hidden-layer");
  tval_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    ValueConfig cfg = cli::value_from(run);
    if (opt_gamma >= 0) cfg.gamma = opt_gamma;
    if (opt_alpha >= 0) cfg.alpha = opt_alpha;
    if (!tval_estimator.empty()) cfg.estimator = cli::estimator_from_string(tval_estimator);
    {
      std::vector<std::string> errors;
      cfg.validate(errors);
      if (!errors.empty()) {
        std::string msg = "invalid value config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw std::runtime_error(msg);
      }
    }
    const Dataset ds = load_dataset(tval_data);
    const EncoderParams enc = EncoderParams::load(tval_enc, &ds.vocab);
    const RewardMap rewards = cli::reward_from(run, ds.vocab);
    ValueTrainLog log;
    const ValueParams params = train_values(ds, enc, cfg, rewards, &log);
    params.save(tval_out);
    if (!tval_log.empty()) write_file_atomic(tval_log, log.to_csv());
    if (!log.tail_nonincreasing) {
      std::fprintf(stderr, "train-value: warning: mean |TD| still moving in the last quarter "
                           "of sweeps; consider more sweeps or a smaller alpha\n");
    }

    Manifest manifest("train-value", run);
    manifest.add_input(tval_enc);
    manifest.add_input_dir(tval_data);
    manifest.add_artifact(tval_out);
    manifest.write(fs::path(tval_out).string() + ".manifest.json");
    std::printf("train-value: %zu sweeps, final mean |TD| %s -> %s\n", log.sweeps.size(),
                format_double(log.sweeps.empty() ? 0.0 : log.sweeps.back().mean_abs_td).c_str(),
                tval_out.c_str());
  });

  // --- score ---
  auto* score_cmd = app.add_subcommand("score", "emit per-journey proxy-rating traces");
  std::string score_enc, score_vals, score_data, score_out, score_split = "all";
  score_cmd->add_option("--encoder", score_enc, "encoder checkpoint")->required();
  score_cmd->add_option("--values", score_vals, "value checkpoint")->required();
  score_cmd->add_option("--data", score_data, "dataset directory")->required();
  score_cmd->add_option("--out", score_out, "traces CSV path")->required();
  score_cmd->add_option("--split", score_split, "train | test | all");
  score_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const Dataset ds = load_dataset(score_data);
    const EncoderParams enc = EncoderParams::load(score_enc, &ds.vocab);
    const ValueParams vals = ValueParams::load(score_vals);
    const auto journeys = split_journeys(ds, score_split);
    const auto ys = score_all(enc, vals, journeys, common.threads);
    write_file_atomic(score_out, traces_csv(journeys, ys, ds.vocab));

    Manifest manifest("score", run);
    manifest.add_input(score_enc);
    manifest.add_input(score_vals);
    manifest.add_input_dir(score_data);
    manifest.add_artifact(score_out);
    manifest.write(fs::path(score_out).string() + ".manifest.json");
    std::printf("score: %zu journeys (%s) -> %s\n", journeys.size(), score_split.c_str(),
                score_out.c_str());
  });

  // --- metrics ---
  auto* metrics_cmd = app.add_subcommand("metrics", "Z proportions, pair scores, distributions");
  std::string met_traces, met_data, met_out, met_split = "test";
  MetricsOptions met_opts;
  metrics_cmd->add_option("--traces", met_traces, "traces CSV from score")->required();
  metrics_cmd->add_option("--data", met_data, "dataset directory")->required();
  metrics_cmd->add_option("--out", met_out, "output directory")->required();
  metrics_cmd->add_option("--split", met_split, "train | test | all");
  metrics_cmd->add_option("--min-n", met_opts.min_n, "minimum pair count in pairs.csv");
  metrics_cmd->add_flag("--exclude-survey-pairs", met_opts.exclude_survey_pairs,
                        "drop pairs touching the survey pseudo-action");
  metrics_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const Dataset ds = load_dataset(met_data);
    const auto journeys = split_journeys(ds, met_split);
    const auto traces = align_traces(journeys, load_traces_csv(met_traces));
    fs::create_directories(met_out);
    Manifest manifest("metrics", run);
    manifest.add_input(met_traces);
    manifest.add_input_dir(met_data);
    emit_metrics(ds, journeys, traces, met_opts, met_out, manifest);
    manifest.write(fs::path(met_out) / "manifest.json");
    std::printf("metrics: %zu journeys (%s) -> %s\n", journeys.size(), met_split.c_str(),
                met_out.c_str());
  });

  // --- validate ---
  auto* val_cmd = app.add_subcommand("validate", "confusion metrics against survey responses");
  std::string val_traces, val_data, val_out, val_split = "test";
  int val_q = 1;
  val_cmd->add_option("--traces", val_traces, "traces CSV from score")->required();
  val_cmd->add_option("--data", val_data, "dataset directory")->required();
  val_cmd->add_option("--out", val_out, "report JSON path")->required();
  val_cmd->add_option("--q", val_q, "lag to validate (1 or 2)")->check(CLI::Range(1, 10));
  val_cmd->add_option("--split", val_split, "train | test | all");
  val_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const Dataset ds = load_dataset(val_data);
    const auto journeys = split_journeys(ds, val_split);
    const auto traces = align_traces(journeys, load_traces_csv(val_traces));
    const SurveyData survey = survey_subset(journeys, traces);
    const ConfusionReport report = validate_against_survey(survey.journeys, survey.traces, val_q);
    write_file_atomic(val_out, confusion_json(report, val_q, val_split).dump(2) + "\n");

    Manifest manifest("validate", run);
    manifest.add_input(val_traces);
    manifest.add_input_dir(val_data);
    manifest.add_artifact(val_out);
    manifest.write(fs::path(val_out).string() + ".manifest.json");
    std::printf("validate: lag(%d) on %zu survey journeys, accuracy %s -> %s\n", val_q,
                survey.journeys.size(), format_double(report.accuracy()).c_str(),
                val_out.c_str());
  });

  // --- predict ---
  auto* pred_cmd = app.add_subcommand("predict", "purchase prediction: Z vs survey scores");
  std::string pred_traces, pred_data, pred_enc, pred_out;
  pred_cmd->add_option("--traces", pred_traces, "traces CSV covering train and test")->required();
  pred_cmd->add_option("--data", pred_data, "dataset directory")->required();
  pred_cmd->add_option("--encoder", pred_enc, "encoder checkpoint (purchase head)")->required();
  pred_cmd->add_option("--out", pred_out, "output directory")->required();
  pred_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const Dataset ds = load_dataset(pred_data);
    const EncoderParams enc = EncoderParams::load(pred_enc, &ds.vocab);
    const auto by_id = load_traces_csv(pred_traces);
    fs::create_directories(pred_out);
    Manifest manifest("predict", run);
    manifest.add_input(pred_traces);
    manifest.add_input_dir(pred_data);
    manifest.add_input(pred_enc);

    json auc;
    for (const char* split : {"train", "test"}) {
      const auto journeys = split_journeys(ds, split);
      const auto traces = align_traces(journeys, by_id);
      auc[split] = predict_split_json(journeys, traces, pred_out, split, manifest);
    }

    PurchaseHeadConfig hcfg;
    hcfg.seed = derive_seed(run.seed, "head");
    const PurchaseHead head = train_purchase_head(ds, enc, hcfg);
    for (const char* split : {"train", "test"}) {
      const auto journeys = split_journeys(ds, split);
      std::vector<double> final_p;
      std::vector<int> labels;
      for (const Journey* j : journeys) {
        final_p.push_back(head_probabilities(head, enc, *j).back());
        labels.push_back(j->has_purchase ? 1 : 0);
      }
      bool pos = false, neg = false;
      for (int l : labels) (l ? pos : neg) = true;
      auc[split]["head_final_auc"] =
          pos && neg ? json(purchase_auc(final_p, labels)) : json(nullptr);
    }
    write_file_atomic(fs::path(pred_out) / "auc.json", auc.dump(2) + "\n");
    manifest.add_artifact(fs::path(pred_out) / "auc.json");
    manifest.write(fs::path(pred_out) / "manifest.json");
    std::printf("predict -> %s\n", pred_out.c_str());
  });

  // --- report ---
  auto* rep_cmd = app.add_subcommand("report", "score and render every analysis into one directory");
  std::string rep_enc, rep_vals, rep_data, rep_out;
  rep_cmd->add_option("--encoder", rep_enc, "encoder checkpoint")->required();
  rep_cmd->add_option("--values", rep_vals, "value checkpoint")->required();
  rep_cmd->add_option("--data", rep_data, "dataset directory")->required();
  rep_cmd->add_option("--out", rep_out, "output directory")->required();
  rep_cmd->callback([&]() {
    const RunConfig run = load_config(common);
    const Dataset ds = load_dataset(rep_data);
    const EncoderParams enc = EncoderParams::load(rep_enc, &ds.vocab);
    const ValueParams vals = ValueParams::load(rep_vals);
    const fs::path out_dir = rep_out;
    fs::create_directories(out_dir);
    Manifest manifest("report", run);
    manifest.add_input(rep_enc);
    manifest.add_input(rep_vals);
    manifest.add_input_dir(rep_data);

    const auto all_journeys = split_journeys(ds, "all");
    const auto ys = score_all(enc, vals, all_journeys, common.threads);
    write_file_atomic(out_dir / "traces.csv", traces_csv(all_journeys, ys, ds.vocab));
    manifest.add_artifact(out_dir / "traces.csv");

    const auto test_journeys = split_journeys(ds, "test");
    std::map<std::string, std::vector<double>> by_id;
    for (size_t k = 0; k < all_journeys.size(); ++k) by_id[all_journeys[k]->journey_id] = ys[k];
    const auto test_traces = align_traces(test_journeys, by_id);

    emit_metrics(ds, test_journeys, test_traces, MetricsOptions{}, out_dir, manifest);

    const SurveyData survey = survey_subset(test_journeys, test_traces);
    json validation = json::array();
    for (int q : {1, 2}) {
      validation.push_back(
          confusion_json(validate_against_survey(survey.journeys, survey.traces, q), q, "test"));
    }
    write_file_atomic(out_dir / "validation.json", validation.dump(2) + "\n");
    manifest.add_artifact(out_dir / "validation.json");

    json auc;
    for (const char* split : {"train", "test"}) {
      const auto journeys = split_journeys(ds, split);
      const auto traces = align_traces(journeys, by_id);
      auc[split] = predict_split_json(journeys, traces, out_dir, split, manifest);
    }
    PurchaseHeadConfig hcfg;
    hcfg.seed = derive_seed(run.seed, "head");
    const PurchaseHead head = train_purchase_head(ds, enc, hcfg);
    std::vector<std::vector<double>> test_probs;
    for (const Journey* j : test_journeys) test_probs.push_back(head_probabilities(head, enc, *j));
    {
      std::vector<double> final_p;
      std::vector<int> labels;
      for (size_t k = 0; k < test_journeys.size(); ++k) {
        final_p.push_back(test_probs[k].back());
        labels.push_back(test_journeys[k]->has_purchase ? 1 : 0);
      }
      bool pos = false, neg = false;
      for (int l : labels) (l ? pos : neg) = true;
      auc["test"]["head_final_auc"] =
          pos && neg ? json(purchase_auc(final_p, labels)) : json(nullptr);
    }
    write_file_atomic(out_dir / "auc.json", auc.dump(2) + "\n");
    manifest.add_artifact(out_dir / "auc.json");

    // per-timestep correlation study on the test split
    std::vector<Journey> tj;
    for (const Journey* j : test_journeys) tj.push_back(*j);
    const CorrelationStudy study = correlation_study(tj, test_traces, test_probs);
    std::string corr_csv = "journey_id,length,corr_value,corr_prefix_z\n";
    for (const auto& row : study.rows) {
      corr_csv += csv_field(row.journey_id) + "," + std::to_string(row.length) + ",";
      corr_csv += row.corr_value ? format_double(*row.corr_value) : "";
      corr_csv += ",";
      corr_csv += row.corr_prefix_z ? format_double(*row.corr_prefix_z) : "";
      corr_csv += "\n";
    }
    write_file_atomic(out_dir / "correlations.csv", corr_csv);
    manifest.add_artifact(out_dir / "correlations.csv");

    json corr_summary;
    corr_summary["excluded_zero_variance"] = study.excluded_zero_variance;
    json bins = json::array();
    for (const auto& bin : study.bins) {
      json b;
      b["min_len_exclusive"] = bin.min_len;
      b["max_len"] = bin.max_len;
      b["n_value"] = bin.corr_value.size();
      b["n_prefix_z"] = bin.corr_prefix_z.size();
      b["dip_value"] = bin.dip_value;
      b["dip_prefix_z"] = bin.dip_prefix_z;
      bins.push_back(std::move(b));
    }
    corr_summary["bins"] = bins;
    write_file_atomic(out_dir / "correlation_summary.json", corr_summary.dump(2) + "\n");
    manifest.add_artifact(out_dir / "correlation_summary.json");

    manifest.write(out_dir / "manifest.json");
    std::printf("report -> %s\n", out_dir.string().c_str());
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  bool json_errors = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string_view(argv[i]) == "--json-errors") json_errors = true;
  }
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    if (json_errors) {
      json err;
      err["error"] = e.what();
      std::fprintf(stderr, "%s\n", err.dump().c_str());
    } else {
      std::fprintf(stderr, "error: %s\n", e.what());
    }
    return 1;
  }
}

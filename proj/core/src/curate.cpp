#include "clickval/curate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "clickval/ingest.hpp"
#include "clickval/rng.hpp"
#include "json_util.hpp"

namespace clickval {

void CurationConfig::validate(std::vector<std::string>& errors) const {
  if (min_len < 2) errors.push_back("curation.min_len must be >= 2");
  if (max_len < min_len) errors.push_back("curation.max_len must be >= min_len");
  if (purchase_ratio_num <= 0 || purchase_ratio_den <= 0) {
    errors.push_back("curation.purchase_ratio parts must be positive");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    errors.push_back("curation.train_fraction must be in (0, 1)");
  }
  for (int t : per_category_targets) {
    if (t < 0) errors.push_back("curation.per_category_targets must be nonnegative");
  }
}

namespace {

bool has_survey(const Journey& j) { return j.survey_pos.has_value(); }

/// Keep all survey journeys; fill up to `target` with a seeded sample of the rest.
void sample_category(std::vector<Journey>& pool, int target, Rng& rng, int& sampled_out) {
  if (target <= 0 || static_cast<int>(pool.size()) <= target) return;
  std::vector<size_t> optional_idx;
  int n_survey = 0;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (has_survey(pool[i])) {
      ++n_survey;
    } else {
      optional_idx.push_back(i);
    }
  }
  const int room = std::max(0, target - n_survey);
  if (static_cast<int>(optional_idx.size()) <= room) return;
  rng.shuffle(optional_idx);
  optional_idx.resize(static_cast<size_t>(room));
  std::vector<bool> keep(pool.size(), false);
  for (size_t i = 0; i < pool.size(); ++i) keep[i] = has_survey(pool[i]);
  for (size_t i : optional_idx) keep[i] = true;

  std::vector<Journey> kept;
  kept.reserve(static_cast<size_t>(target));
  for (size_t i = 0; i < pool.size(); ++i) {
    if (keep[i]) {
      kept.push_back(std::move(pool[i]));
    } else {
      ++sampled_out;
    }
  }
  pool = std::move(kept);
}

/// Remove `excess` non-survey journeys matching `purchase` at random.
int downsample_class(std::vector<Journey>& pool, bool purchase, int excess, Rng& rng) {
  if (excess <= 0) return 0;
  std::vector<size_t> candidates;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].has_purchase == purchase && !has_survey(pool[i])) candidates.push_back(i);
  }
  rng.shuffle(candidates);
  const int n_remove = std::min<int>(excess, static_cast<int>(candidates.size()));
  std::vector<bool> drop(pool.size(), false);
  for (int k = 0; k < n_remove; ++k) drop[candidates[static_cast<size_t>(k)]] = true;
  std::vector<Journey> kept;
  kept.reserve(pool.size() - static_cast<size_t>(n_remove));
  for (size_t i = 0; i < pool.size(); ++i) {
    if (!drop[i]) kept.push_back(std::move(pool[i]));
  }
  pool = std::move(kept);
  return n_remove;
}

}  // namespace

Dataset curate(std::vector<Journey> journeys, ActionVocab vocab, const CurationConfig& cfg) {
  std::vector<std::string> errors;
  cfg.validate(errors);
  if (!errors.empty()) {
    std::string msg = "invalid curation config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }

  Dataset ds;
  ds.vocab = std::move(vocab);
  ds.curation = cfg;
  ds.stats.n_input = static_cast<int>(journeys.size());

  // Canonical input order so curation is independent of caller ordering.
  std::sort(journeys.begin(), journeys.end(), [](const Journey& a, const Journey& b) {
    return a.journey_id < b.journey_id;
  });

  // Length filter applies uniformly, survey journeys included.
  std::array<std::vector<Journey>, 4> by_category;
  for (auto& j : journeys) {
    if (j.length() < cfg.min_len || j.length() > cfg.max_len) {
      ++ds.stats.dropped_length;
      continue;
    }
    by_category[static_cast<size_t>(j.category)].push_back(std::move(j));
  }

  for (int c = 0; c < 4; ++c) {
    Rng rng(derive_seed(cfg.seed, "curate-category", static_cast<uint64_t>(c)));
    sample_category(by_category[static_cast<size_t>(c)], cfg.per_category_targets[static_cast<size_t>(c)],
                    rng, ds.stats.sampled_out);
  }

  std::vector<Journey> pool;
  for (auto& cat : by_category) {
    for (auto& j : cat) pool.push_back(std::move(j));
  }

  // Enforce the purchase : no-purchase ratio by downsampling the majority
  // class. Survey journeys are never removed, so the target may be missed;
  // that shows up as ratio_satisfied = false.
  auto count_class = [&pool](bool purchase) {
    return static_cast<int>(std::count_if(pool.begin(), pool.end(), [purchase](const Journey& j) {
      return j.has_purchase == purchase;
    }));
  };
  {
    Rng rng(derive_seed(cfg.seed, "curate-ratio"));
    const int64_t np = count_class(true);
    const int64_t nn = count_class(false);
    // want np : nn == num : den  <=>  np * den == nn * num; with one class
    // absent the ratio is unreachable and downsampling would only erase data
    if (np == 0 || nn == 0) {
    } else if (np * cfg.purchase_ratio_den > nn * cfg.purchase_ratio_num) {
      const int target_np = static_cast<int>(nn * cfg.purchase_ratio_num / cfg.purchase_ratio_den);
      ds.stats.ratio_removed += downsample_class(pool, true, static_cast<int>(np) - target_np, rng);
    } else if (nn * cfg.purchase_ratio_num > np * cfg.purchase_ratio_den) {
      const int target_nn = static_cast<int>(np * cfg.purchase_ratio_den / cfg.purchase_ratio_num);
      ds.stats.ratio_removed += downsample_class(pool, false, static_cast<int>(nn) - target_nn, rng);
    }
  }

  ds.stats.n_purchase = count_class(true);
  ds.stats.n_no_purchase = count_class(false);
  for (const auto& j : pool) {
    ++ds.stats.category_counts[static_cast<size_t>(j.category)];
  }
  if (ds.stats.n_purchase > 0) {
    const double achieved = static_cast<double>(ds.stats.n_no_purchase) / ds.stats.n_purchase;
    const double requested = static_cast<double>(cfg.purchase_ratio_den) / cfg.purchase_ratio_num;
    ds.stats.ratio_satisfied = std::abs(achieved - requested) <= 0.10 * requested;
  } else {
    ds.stats.ratio_satisfied = false;
  }

  // Journey-level random split.
  {
    Rng rng(derive_seed(cfg.seed, "curate-split"));
    rng.shuffle(pool);
    const auto n = static_cast<int>(pool.size());
    const int n_train = static_cast<int>(std::lround(cfg.train_fraction * n));
    for (int i = 0; i < n; ++i) {
      if (i < n_train) {
        ds.train.push_back(std::move(pool[static_cast<size_t>(i)]));
      } else {
        ds.test.push_back(std::move(pool[static_cast<size_t>(i)]));
      }
    }
  }
  ds.stats.n_train = static_cast<int>(ds.train.size());
  ds.stats.n_test = static_cast<int>(ds.test.size());
  return ds;
}

namespace {

json stats_to_json(const Dataset& ds) {
  const auto& st = ds.stats;
  json cats;
  for (int c = 0; c < 4; ++c) {
    cats[std::string(to_string(static_cast<JourneyCategory>(c)))] =
        st.category_counts[static_cast<size_t>(c)];
  }
  json j;
  j["n_input"] = st.n_input;
  j["dropped_length"] = st.dropped_length;
  j["sampled_out"] = st.sampled_out;
  j["ratio_removed"] = st.ratio_removed;
  j["category_counts"] = cats;
  j["n_purchase"] = st.n_purchase;
  j["n_no_purchase"] = st.n_no_purchase;
  j["requested_ratio"] = std::to_string(ds.curation.purchase_ratio_num) + ":" +
                         std::to_string(ds.curation.purchase_ratio_den);
  if (st.n_purchase > 0) {
    j["achieved_no_purchase_per_purchase"] =
        static_cast<double>(st.n_no_purchase) / st.n_purchase;
  } else {
    j["achieved_no_purchase_per_purchase"] = nullptr;
  }
  j["ratio_satisfied"] = st.ratio_satisfied;
  j["train_fraction"] = ds.curation.train_fraction;
  j["n_train"] = st.n_train;
  j["n_test"] = st.n_test;
  j["split_seed"] = ds.curation.seed;
  json cur;
  cur["min_len"] = ds.curation.min_len;
  cur["max_len"] = ds.curation.max_len;
  cur["purchase_ratio_num"] = ds.curation.purchase_ratio_num;
  cur["purchase_ratio_den"] = ds.curation.purchase_ratio_den;
  cur["per_category_targets"] = ds.curation.per_category_targets;
  cur["train_fraction"] = ds.curation.train_fraction;
  cur["seed"] = ds.curation.seed;
  j["curation"] = cur;
  return j;
}

void stats_from_json(const json& j, Dataset& ds) {
  auto& st = ds.stats;
  st.n_input = j.value("n_input", 0);
  st.dropped_length = j.value("dropped_length", 0);
  st.sampled_out = j.value("sampled_out", 0);
  st.ratio_removed = j.value("ratio_removed", 0);
  if (auto it = j.find("category_counts"); it != j.end()) {
    for (int c = 0; c < 4; ++c) {
      st.category_counts[static_cast<size_t>(c)] =
          it->value(std::string(to_string(static_cast<JourneyCategory>(c))), 0);
    }
  }
  st.n_purchase = j.value("n_purchase", 0);
  st.n_no_purchase = j.value("n_no_purchase", 0);
  st.ratio_satisfied = j.value("ratio_satisfied", false);
  st.n_train = j.value("n_train", 0);
  st.n_test = j.value("n_test", 0);
  if (auto it = j.find("curation"); it != j.end()) {
    auto& cur = ds.curation;
    cur.min_len = it->value("min_len", cur.min_len);
    cur.max_len = it->value("max_len", cur.max_len);
    cur.purchase_ratio_num = it->value("purchase_ratio_num", cur.purchase_ratio_num);
    cur.purchase_ratio_den = it->value("purchase_ratio_den", cur.purchase_ratio_den);
    if (auto t = it->find("per_category_targets"); t != it->end()) {
      for (int c = 0; c < 4 && c < static_cast<int>(t->size()); ++c) {
        cur.per_category_targets[static_cast<size_t>(c)] = (*t)[static_cast<size_t>(c)].get<int>();
      }
    }
    cur.train_fraction = it->value("train_fraction", cur.train_fraction);
    cur.seed = it->value("seed", cur.seed);
  }
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ds.vocab.save(dir / "vocab.json");
  save_journeys_jsonl(ds.train, ds.vocab, dir / "train.jsonl");
  save_journeys_jsonl(ds.test, ds.vocab, dir / "test.jsonl");
  save_json_file(dir / "manifest.json", stats_to_json(ds));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.vocab = ActionVocab::load(dir / "vocab.json");
  ds.train = load_journeys_jsonl(dir / "train.jsonl", ds.vocab);
  ds.test = load_journeys_jsonl(dir / "test.jsonl", ds.vocab);
  stats_from_json(load_json_file(dir / "manifest.json"), ds);
  return ds;
}

}  // namespace clickval

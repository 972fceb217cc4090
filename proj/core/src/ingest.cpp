#include "clickval/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"

namespace clickval {

namespace {

[[noreturn]] void line_error(const std::filesystem::path& path, size_t line_no,
                             const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

std::vector<ClickEvent> ingest_events(const std::filesystem::path& jsonl,
                                      const ActionVocab& vocab) {
  std::ifstream in(jsonl);
  if (!in) throw std::runtime_error("cannot open event log: " + jsonl.string());

  std::vector<ClickEvent> events;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
      line_error(jsonl, line_no, "malformed JSON event");
    }

    ClickEvent ev;
    try {
      ev.customer_id = require_key(j, "customer_id", "event").get<std::string>();
      ev.ts_ms = require_key(j, "ts", "event").get<int64_t>();
      const std::string action = require_key(j, "action", "event").get<std::string>();
      ev.action = vocab.index_of(action);
      if (ev.action < 0) {
        line_error(jsonl, line_no, "unknown action label \"" + action + "\"");
      }
      if (auto it = j.find("dwell_ms"); it != j.end() && !it->is_null()) {
        ev.dwell_ms = it->get<int64_t>();
      }
      if (auto it = j.find("survey_score"); it != j.end() && !it->is_null()) {
        ev.survey_score = it->get<int>();
      }
    } catch (const json::exception& e) {
      line_error(jsonl, line_no, std::string("bad event field: ") + e.what());
    }

    if (ev.ts_ms <= 0) {
      line_error(jsonl, line_no, "timestamp must be strictly positive");
    }
    if (ev.dwell_ms && *ev.dwell_ms < 0) {
      line_error(jsonl, line_no, "dwell_ms must be nonnegative");
    }
    if (ev.survey_score) {
      if (ev.action != vocab.survey_id()) {
        line_error(jsonl, line_no, "survey_score on a non-survey action");
      }
      if (*ev.survey_score < 0 || *ev.survey_score > 10) {
        line_error(jsonl, line_no, "survey_score outside [0, 10]");
      }
    }
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<Journey> stitch_journeys(std::vector<ClickEvent> events,
                                     const ActionVocab& vocab,
                                     const StitchOptions& opts) {
  // Canonical customer order keeps output independent of input interleaving.
  std::map<std::string, std::vector<ClickEvent>> per_customer;
  for (auto& ev : events) {
    if (ev.action < 0 || ev.action >= vocab.size()) {
      throw std::runtime_error("stitch: action index out of range for customer " + ev.customer_id);
    }
    per_customer[ev.customer_id].push_back(std::move(ev));
  }

  std::vector<Journey> journeys;
  for (auto& [customer, stream] : per_customer) {
    std::stable_sort(stream.begin(), stream.end(),
                     [](const ClickEvent& a, const ClickEvent& b) { return a.ts_ms < b.ts_ms; });

    bool prior_purchase = false;
    int ordinal = 0;
    size_t i = 0;
    while (i < stream.size()) {
      Journey jny;
      jny.customer_id = customer;
      jny.journey_id = customer + "#" + std::to_string(ordinal++);

      size_t j = i;
      for (; j < stream.size(); ++j) {
        if (j > i && stream[j].ts_ms - stream[j - 1].ts_ms > opts.inactivity_gap_ms) {
          break;  // inactivity boundary
        }
        jny.events.push_back(stream[j]);
        if (stream[j].action == vocab.purchase_id()) {
          ++j;
          break;  // purchase terminates its journey
        }
      }
      i = j;

      jny.has_purchase = jny.events.back().action == vocab.purchase_id();
      jny.category = jny.has_purchase
                         ? (prior_purchase ? JourneyCategory::kP2P : JourneyCategory::kStart2P)
                         : (prior_purchase ? JourneyCategory::kAfterPNoP : JourneyCategory::kNoP);
      for (int k = 0; k < jny.length(); ++k) {
        if (jny.events[static_cast<size_t>(k)].action == vocab.survey_id()) {
          jny.survey_pos = k;
          break;
        }
      }
      prior_purchase = prior_purchase || jny.has_purchase;
      journeys.push_back(std::move(jny));
    }
  }
  return journeys;
}

namespace {

json journey_to_json(const Journey& jny, const ActionVocab& vocab) {
  json events = json::array();
  for (const auto& ev : jny.events) {
    json e;
    e["ts"] = ev.ts_ms;
    e["action"] = vocab.label(ev.action);
    if (ev.dwell_ms) e["dwell_ms"] = *ev.dwell_ms;
    if (ev.survey_score) e["survey_score"] = *ev.survey_score;
    events.push_back(std::move(e));
  }
  json j;
  j["customer_id"] = jny.customer_id;
  j["journey_id"] = jny.journey_id;
  j["category"] = std::string(to_string(jny.category));
  if (jny.survey_pos) j["survey_pos"] = *jny.survey_pos;
  j["events"] = std::move(events);
  return j;
}

Journey journey_from_json(const json& j, const ActionVocab& vocab, const std::string& ctx) {
  Journey jny;
  jny.customer_id = require_key(j, "customer_id", ctx).get<std::string>();
  jny.journey_id = require_key(j, "journey_id", ctx).get<std::string>();
  const std::string cat = require_key(j, "category", ctx).get<std::string>();
  auto parsed = category_from_string(cat);
  if (!parsed) throw std::runtime_error(ctx + ": unknown category \"" + cat + "\"");
  jny.category = *parsed;
  if (auto it = j.find("survey_pos"); it != j.end() && !it->is_null()) {
    jny.survey_pos = it->get<int>();
  }
  for (const auto& e : require_key(j, "events", ctx)) {
    ClickEvent ev;
    ev.customer_id = jny.customer_id;
    ev.ts_ms = require_key(e, "ts", ctx).get<int64_t>();
    const std::string action = require_key(e, "action", ctx).get<std::string>();
    ev.action = vocab.index_of(action);
    if (ev.action < 0) throw std::runtime_error(ctx + ": unknown action label \"" + action + "\"");
    if (auto it = e.find("dwell_ms"); it != e.end() && !it->is_null()) ev.dwell_ms = it->get<int64_t>();
    if (auto it = e.find("survey_score"); it != e.end() && !it->is_null()) ev.survey_score = it->get<int>();
    jny.events.push_back(std::move(ev));
  }
  if (jny.events.empty()) throw std::runtime_error(ctx + ": journey with no events");
  jny.has_purchase = jny.events.back().action == vocab.purchase_id();
  if (jny.survey_pos &&
      (*jny.survey_pos < 0 || *jny.survey_pos >= jny.length() ||
       jny.events[static_cast<size_t>(*jny.survey_pos)].action != vocab.survey_id())) {
    throw std::runtime_error(ctx + ": survey_pos does not point at a survey event");
  }
  return jny;
}

}  // namespace

void save_journeys_jsonl(const std::vector<Journey>& journeys, const ActionVocab& vocab,
                         const std::filesystem::path& path) {
  std::string out;
  for (const auto& jny : journeys) {
    out += journey_to_json(jny, vocab).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<Journey> load_journeys_jsonl(const std::filesystem::path& path,
                                         const ActionVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open journeys file: " + path.string());
  std::vector<Journey> journeys;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) line_error(path, line_no, "malformed journey JSON");
    journeys.push_back(journey_from_json(j, vocab, path.string() + ":" + std::to_string(line_no)));
  }
  return journeys;
}

}  // namespace clickval

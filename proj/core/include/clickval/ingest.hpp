#pragma once

#include <filesystem>
#include <vector>

#include "clickval/journey.hpp"
#include "clickval/vocab.hpp"

namespace clickval {

/// Parse a JSONL event log. One event per line:
///   {"customer_id": str, "ts": int_ms, "action": str,
///    "dwell_ms": int?, "survey_score": int?}
/// Malformed lines, unknown action labels, non-positive timestamps and
/// misplaced survey scores all raise with the offending line number.
std::vector<ClickEvent> ingest_events(const std::filesystem::path& jsonl,
                                      const ActionVocab& vocab);

struct StitchOptions {
  /// A gap longer than this splits a customer's stream into separate
  /// journeys, so an unbounded history cannot form one giant journey.
  int64_t inactivity_gap_ms = 30ll * 24 * 3600 * 1000;
};

/// Group events per customer, sort by time, and split into journeys at every
/// purchase event (the purchase terminates its journey) and at inactivity
/// gaps. Assigns the four-way category and the first survey position.
/// Output is ordered by customer_id, then time.
std::vector<Journey> stitch_journeys(std::vector<ClickEvent> events,
                                     const ActionVocab& vocab,
                                     const StitchOptions& opts = {});

/// JSONL round-trip for stitched (uncurated) journeys, one journey per line.
void save_journeys_jsonl(const std::vector<Journey>& journeys,
                         const ActionVocab& vocab,
                         const std::filesystem::path& path);
std::vector<Journey> load_journeys_jsonl(const std::filesystem::path& path,
                                         const ActionVocab& vocab);

}  // namespace clickval

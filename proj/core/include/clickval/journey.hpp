#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clickval {

/// The four journey kinds: bounded by purchases on either side, by the start
/// or end of the observation window, or by neither.
enum class JourneyCategory {
  kP2P,        // purchase to purchase
  kStart2P,    // starts at observation start, ends in a purchase
  kAfterPNoP,  // begins after a purchase, no further purchase observed
  kNoP,        // no purchase throughout
};

std::string_view to_string(JourneyCategory c);
std::optional<JourneyCategory> category_from_string(std::string_view s);

struct ClickEvent {
  std::string customer_id;
  int64_t ts_ms = 0;  // UTC epoch milliseconds, strictly positive
  int action = -1;    // vocab index
  std::optional<int64_t> dwell_ms;
  std::optional<int> survey_score;  // only on survey events, 0..10
};

struct Journey {
  std::string customer_id;
  std::string journey_id;  // customer_id + "#" + per-customer ordinal
  std::vector<ClickEvent> events;
  JourneyCategory category = JourneyCategory::kNoP;
  bool has_purchase = false;
  std::optional<int> survey_pos;  // index into events of the first survey event

  int length() const { return static_cast<int>(events.size()); }
};

}  // namespace clickval

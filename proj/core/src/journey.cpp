#include "clickval/journey.hpp"

namespace clickval {

std::string_view to_string(JourneyCategory c) {
  switch (c) {
    case JourneyCategory::kP2P: return "P2P";
    case JourneyCategory::kStart2P: return "START2P";
    case JourneyCategory::kAfterPNoP: return "AFTERP_NOP";
    case JourneyCategory::kNoP: return "NOP";
  }
  return "NOP";
}

std::optional<JourneyCategory> category_from_string(std::string_view s) {
  if (s == "P2P") return JourneyCategory::kP2P;
  if (s == "START2P") return JourneyCategory::kStart2P;
  if (s == "AFTERP_NOP") return JourneyCategory::kAfterPNoP;
  if (s == "NOP") return JourneyCategory::kNoP;
  return std::nullopt;
}

}  // namespace clickval

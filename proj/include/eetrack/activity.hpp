#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "eetrack/error.hpp"

namespace eetrack {

/// Body-motion classes recognised from the phone's inertial sensors.
/// The integer encoding is stable and is used in every file format.
enum class PhysicalActivity : int {
  lie = 0,
  missing = 1,
  sit = 2,
  stairsdown = 3,
  stairsup = 4,
  stand = 5,
  run = 6,
  walk = 7,
};

inline constexpr std::size_t kNumPhysicalActivities = 8;

inline constexpr std::array<std::string_view, kNumPhysicalActivities> kPhysicalActivityNames = {
    "lie", "missing", "sit", "stairsdown", "stairsup", "stand", "run", "walk"};

inline constexpr std::size_t index_of(PhysicalActivity a) noexcept {
  return static_cast<std::size_t>(a);
}

inline constexpr PhysicalActivity activity_from_index(std::size_t i) {
  if (i >= kNumPhysicalActivities) throw InvalidParameter("physical activity index out of range");
  return static_cast<PhysicalActivity>(static_cast<int>(i));
}

inline constexpr std::string_view to_string(PhysicalActivity a) noexcept {
  return kPhysicalActivityNames[index_of(a)];
}

inline std::optional<PhysicalActivity> parse_physical_activity(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kNumPhysicalActivities; ++i) {
    if (kPhysicalActivityNames[i] == s) return static_cast<PhysicalActivity>(static_cast<int>(i));
  }
  return std::nullopt;
}

inline PhysicalActivity physical_activity_or_throw(std::string_view s) {
  if (auto a = parse_physical_activity(s)) return *a;
  throw InvalidParameter("unknown physical activity '" + std::string(s) + "'");
}

}  // namespace eetrack

#pragma once

namespace eetrack {

inline constexpr const char* kToolName = "eetrack";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace eetrack

#pragma once

namespace lcsynth {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lcsynth

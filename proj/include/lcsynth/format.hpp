#pragma once

#include <string>
#include <string_view>

namespace lcsynth {

/// Shortest round-trippable decimal form of v.
std::string fmt_double(double v);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

}  // namespace lcsynth

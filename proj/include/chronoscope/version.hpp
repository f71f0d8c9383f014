#pragma once

#include <string_view>

namespace chronoscope {

inline constexpr std::string_view kToolVersion = "chronoscope 0.1.0";

}  // namespace chronoscope

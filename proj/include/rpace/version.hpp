#pragma once

namespace rpace {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rpace

#pragma once

namespace xgait {

inline constexpr const char* kVersion = "xgait 0.1.0";

}  // namespace xgait

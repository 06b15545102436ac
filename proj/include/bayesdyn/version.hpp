#pragma once

namespace bayesdyn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bayesdyn

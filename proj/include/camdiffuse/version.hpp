#pragma once

namespace camdiffuse {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace camdiffuse

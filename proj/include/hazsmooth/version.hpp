#pragma once

namespace hazsmooth {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hazsmooth

#pragma once

namespace backrec {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace backrec

#pragma once

namespace edualloc {

inline constexpr const char* kVersion = "0.1.0";

} // namespace edualloc

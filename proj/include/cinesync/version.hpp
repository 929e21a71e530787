#pragma once

namespace cinesync {

inline constexpr const char* kVersion = "0.1.0";

} // namespace cinesync

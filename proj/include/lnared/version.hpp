#pragma once

namespace lnared {

inline constexpr const char* kVersion = "0.1.0";

} // namespace lnared

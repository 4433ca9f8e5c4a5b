#pragma once

namespace rdpv {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rdpv

#pragma once

namespace tbnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tbnet

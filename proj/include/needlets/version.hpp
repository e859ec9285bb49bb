#pragma once

namespace needlets {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace needlets

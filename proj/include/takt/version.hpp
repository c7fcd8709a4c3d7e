#pragma once

namespace takt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace takt

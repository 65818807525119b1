#pragma once

namespace prerankcal {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prerankcal

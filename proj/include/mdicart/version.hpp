#pragma once

namespace mdicart {

inline constexpr const char* kVersion = "mdicart-0.1.0";

}  // namespace mdicart

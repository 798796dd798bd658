#pragma once

namespace renoscan {

inline constexpr const char* kToolName = "renoscan";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace renoscan

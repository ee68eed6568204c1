#pragma once

namespace foreauth {

inline constexpr const char* kToolVersion = "1.0.0";

} // namespace foreauth

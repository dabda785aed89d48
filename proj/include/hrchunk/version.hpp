#pragma once

namespace hrchunk {
inline constexpr const char* kToolVersion = "0.1.0";
}

#pragma once

namespace ebml {
inline constexpr const char* kVersion = "0.1.0";
}

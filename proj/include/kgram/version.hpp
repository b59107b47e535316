#pragma once

namespace kgram {
inline constexpr const char* kVersion = "0.1.0";
}

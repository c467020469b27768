#pragma once

namespace mmdflow {
inline constexpr const char* kVersion = "0.1.0";
}

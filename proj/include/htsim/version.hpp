#pragma once

namespace htsim {
inline constexpr const char* kVersion = "0.1.0";
}

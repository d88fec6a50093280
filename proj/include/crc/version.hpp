#pragma once

#include <string_view>

namespace crc {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace crc

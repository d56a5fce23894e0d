#pragma once

namespace robprec {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace robprec

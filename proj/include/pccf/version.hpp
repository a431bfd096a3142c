#pragma once

namespace pccf {

inline constexpr const char* kToolVersion = "pcc-forge 0.1.0";
inline constexpr const char* kFormatVersion = "pcc-forge/1";

} // namespace pccf

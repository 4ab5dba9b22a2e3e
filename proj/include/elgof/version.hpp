#pragma once

#define ELGOF_VERSION "0.1.0"

namespace elgof {

inline constexpr const char* version = ELGOF_VERSION;

}  // namespace elgof

#pragma once

namespace qfmqtt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qfmqtt

#pragma once

namespace pedal {
inline constexpr const char* kEngineVersion = "pedal 1.0.0";
}

#pragma once

namespace grade {

inline const char* kVersion = "1.0.0";

}  // namespace grade

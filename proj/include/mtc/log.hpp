#pragma once

#include <iostream>
#include <string_view>

namespace mtc::log {

/// Diagnostics go to stderr; data only ever goes to files.
inline bool& quiet() {
  static bool q = false;
  return q;
}

inline void info(std::string_view msg) {
  if (!quiet()) std::cerr << "[mtc] " << msg << '\n';
}

inline void warn(std::string_view msg) { std::cerr << "[mtc] warning: " << msg << '\n'; }

}  // namespace mtc::log

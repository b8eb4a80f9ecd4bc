#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mtc/error.hpp"

namespace mtc::utf8 {

/// Splits UTF-8 text into one string per codepoint. Invalid sequences raise
/// a FormatError.
inline std::vector<std::string> codepoints(std::string_view s) {
  std::vector<std::string> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    } else if (lead >= 0x80) {
      throw FormatError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (lead >= 0xF8 || i + len > s.size()) {
      throw FormatError("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        throw FormatError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
      }
    }
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::size_t length(std::string_view s) { return codepoints(s).size(); }

}  // namespace mtc::utf8

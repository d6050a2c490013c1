#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "oms/error.hpp"

namespace oms {

/// Decimal text with 17 significant digits; parses back to the identical double.
inline std::string format_exact(double x) {
  if (!std::isfinite(x)) throw NumericError("cannot serialize non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Maps a label onto characters that are safe in a file name.
inline std::string label_to_filename(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (char c : label) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                      c == '_' || c == '.';
    out.push_back(keep ? c : '_');
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace oms

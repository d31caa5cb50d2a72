#pragma once

#include <cstdio>
#include <string>

namespace cf2rec {

/// Locale-independent shortest-enough rendering used in every report so that
/// reruns produce identical bytes.
inline std::string fmt_num(double v, int precision = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

}  // namespace cf2rec

#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace ntk {

// Shortest fixed formatting used by the text file formats. Values written
// through these helpers re-parse exactly, so models quantized to the printed
// grid round-trip byte-identically.
inline std::string fmt_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string fmt_f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Nearest double on the %.9g grid.
inline double quantize_g9(double v) { return std::strtod(fmt_g9(v).c_str(), nullptr); }

}  // namespace ntk

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace kpz {

/// JSON has no infinities: they travel as the strings "inf" / "-inf".
inline nlohmann::json json_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  return j.get<double>();
}

/// 17 significant digits, enough to round-trip a double.
inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace kpz

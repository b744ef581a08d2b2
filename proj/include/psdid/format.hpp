#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "psdid/error.hpp"

namespace psdid {

/// Shortest decimal string that parses back to exactly `v`.
inline std::string shortest_decimal(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc())
    throw Error("cannot format value");
  return std::string(buf, ptr);
}

} // namespace psdid

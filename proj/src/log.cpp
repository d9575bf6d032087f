// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/log.hpp"

#include <cstdlib>
#include <iostream>

namespace layoutforge {

LogLevel parse_log_level(std::string_view text) {
  if (text == "debug") return LogLevel::debug;
  if (text == "info") return LogLevel::info;
  return LogLevel::error;
}

LogLevel log_level() {
  const char* env = std::getenv("LAYOUTFORGE_LOG");
  return env ? parse_log_level(env) : LogLevel::error;
}

void log_message(LogLevel level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static constexpr const char* kNames[] = {"error", "info", "debug"};
  std::cerr << "[layoutforge " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace layoutforge

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace layoutforge {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Level from LAYOUTFORGE_LOG (error|info|debug); defaults to error.
LogLevel log_level();
LogLevel parse_log_level(std::string_view text);

/// Writes "[layoutforge <level>] msg" to stderr when enabled.
void log_message(LogLevel level, std::string_view msg);

}  // namespace layoutforge

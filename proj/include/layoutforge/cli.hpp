// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Lives in the library so tests can drive it
// in-process; tools/main.cpp only forwards argv.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace layoutforge {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // usage, manifest, configuration
inline constexpr int kExitData = 2;      // malformed or inconsistent tensors
inline constexpr int kExitGradcheck = 3; // gradcheck ran and failed

/// `args` excludes the program name. Reports go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace layoutforge

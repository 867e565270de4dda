// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lliam::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Runs `lliam <args...>` (args excludes the program name) and returns the
// process exit code. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Flat key=value config file; '#' starts a comment. Keys may use '_' or '-'.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

} // namespace lliam::cli

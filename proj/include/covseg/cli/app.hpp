#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace covseg::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kData = 2, kRuntime = 3 };

// Parses `args` (without the program name) and runs the command. Results go
// to `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace covseg::cli

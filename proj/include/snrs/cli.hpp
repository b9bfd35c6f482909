#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace snrs {

// Exit codes of the snrs command line.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitDivergence = 3;

/// Runs one `snrs` invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace snrs

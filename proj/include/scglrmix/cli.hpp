#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scglrmix {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitWarnings = 3;

/// Runs one command line (arguments after the program name). Never throws;
/// errors are written to `err` and mapped to the exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scglrmix

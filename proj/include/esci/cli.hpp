#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace esci::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // usage, shape or format error
inline constexpr int kExitNumeric = 3;  // non-finite values, divergence

/// Runs one command line (args[0] is the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace esci::cli

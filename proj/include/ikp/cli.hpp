// Command-line front end: simulate / identify / optimize / predict / bench.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ikp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Parses `args` (args[0] is the program name) and runs one subcommand.
/// Errors are written to `err` as lines prefixed "error:"; returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ikp::cli

#pragma once

#include <iosfwd>

namespace vemlab::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,   ///< invalid config, override or input file
  kUsageError = 2,    ///< unknown subcommand or malformed flags
  kRuntimeError = 3,  ///< failure while running a valid experiment
};

/// Runs one CLI invocation; argv[0] is the program name.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vemlab::cli

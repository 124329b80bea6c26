#pragma once

#include <iosfwd>

namespace pedal {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

/// Parses argv (including the program name) and runs one subcommand:
/// ingest, score, simulate, compare, serve, replay or report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pedal

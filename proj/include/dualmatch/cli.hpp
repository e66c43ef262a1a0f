#pragma once

#include <iosfwd>

namespace dualmatch {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

/// Entry point of the `dualmatch` tool. Subcommands: synth, describe, train,
/// eval, score, sweep, importance.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dualmatch

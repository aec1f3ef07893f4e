#pragma once

#include <iosfwd>

namespace simvit {

// Exit status of run_cli.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2 };

// Entry point behind the simvit executable. Subcommands: describe,
// gradcheck, forward, verify, train-toy, eval-toy.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace simvit

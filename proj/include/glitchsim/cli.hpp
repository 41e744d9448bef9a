#pragma once

#include <iosfwd>

namespace glitchsim {

// Exit statuses of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;    // bad arguments, config or input files
inline constexpr int kExitExecution = 2;  // failure while running a valid request

/// Entry point of the `glitchsim` tool: `glitchsim <subcommand> --config FILE
/// [--seed N] [--out DIR] [--jobs N]` with subcommands gen-data, train, run,
/// search, analyze and defend.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace glitchsim

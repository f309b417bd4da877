#pragma once

#include <iosfwd>

namespace tap {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,       // unknown flag, bad value, missing subcommand
  kExitMissingFile = 3,
  kExitSchema = 4,      // wrong kind or version, malformed file
};

/// Entry point of the `tap` tool: gen | train-localizer | train-captioner | infer | eval.
/// Diagnostics go to `err` as one line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tap

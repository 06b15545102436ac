#pragma once

#include <iosfwd>

namespace bayesdyn::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kDataError = 2,
  kPredictionFailure = 3,
};

/// Entry point for the `simulate`, `train`, `predict` and `evaluate`
/// subcommands. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bayesdyn::cli

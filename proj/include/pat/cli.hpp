#pragma once

#include <ostream>

namespace pat::cli {

enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kUsage = 2,
  kDiverged = 3,
};

// Subcommands: gen-synth, train, eval, gradcheck. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pat::cli

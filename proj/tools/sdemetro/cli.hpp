#pragma once

#include <iosfwd>

namespace sdemetro {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumerical = 4 };

/// Parses argv and runs one subcommand. Normal output goes to `out`,
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sdemetro

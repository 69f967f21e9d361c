#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "latentdialog/verify.hpp"

namespace ld::cli {

/// Name of the environment variable selecting log verbosity:
/// "quiet", "info" (default) or "debug".
inline constexpr const char* kLogLevelEnv = "LATENTDIALOG_LOG";

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit code: 0 on success, 1 on errors, 2 on usage errors and 3
/// when verification fails or training diverges.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The `verify` subcommand over an explicit battery.
int run_verify(const std::vector<verify::Check>& checks, std::ostream& out);

}  // namespace ld::cli

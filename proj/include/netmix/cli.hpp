#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace netmix {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitData = 3, kExitConvergence = 4 };

/// Runs one subcommand. `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace netmix

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace msdc::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kVerificationFailed = 2 };

/// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msdc::cli

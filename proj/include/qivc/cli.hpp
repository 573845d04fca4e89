#pragma once

#include <ostream>
#include <span>
#include <string>

namespace qivc {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

/// Entry point of the `qivc` tool. Progress goes to `out`; a failure prints
/// one line `error: <config|data|numerical>: <reason>` to `err`, removes the
/// files the command had written, and returns the matching exit code.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace qivc

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmfit {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_data = 2,
    exit_model = 3,
    exit_numeric = 4,
};

/// Runs the command-line tool. args excludes the program name.
/// Progress goes to out (unless --quiet), diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mmfit

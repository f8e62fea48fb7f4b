#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace roundcert {

/// argv-style driver (args excludes the program name). Subcommands:
/// analyze, simulate, report. Returns the process exit code contract:
/// 0 success (stochastic certificate / all grid verdicts sound),
/// 2 certificate downgraded to worst-case-only,
/// 3 a simulated verdict is violated,
/// 1 any error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace roundcert

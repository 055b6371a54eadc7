#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace loopcert {

/// Command-line entry point. `args` includes the program name. Exit codes:
/// 0 success or certified, 2 the run completed with a negative answer,
/// 1 usage, input or numerical error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace loopcert

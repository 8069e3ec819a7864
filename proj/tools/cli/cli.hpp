#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rtk::cli {

/// Runs one `rtk` invocation. `args` excludes the program name. Returns the
/// process exit code: 0 success, 1 invalid input, 2 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rtk::cli

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace drf {

// Runs the `drf` command line. `args` excludes the program name.
// Returns 0 on success, 1 on a usage error, 2 on a data or model error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drf

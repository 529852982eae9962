#pragma once

#include <string>
#include <vector>

namespace angio {

// Subcommand router behind the angiomim binary. args excludes the program
// name. Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config
// validation failure. Diagnostics go to stderr; tabular results to stdout.
int dispatch(std::vector<std::string> args);
int dispatch(int argc, const char* const* argv);

}  // namespace angio

#pragma once

#include <string>
#include <vector>

namespace tscam {

// Runs one subcommand. Exit codes: 0 success, 1 domain error, 2 usage error.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

std::string cli_help();

}  // namespace tscam

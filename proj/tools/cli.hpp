#pragma once

#include <string>
#include <vector>

namespace georeg {

// Exit codes: 0 success, 1 usage error, 2 data or runtime error.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace georeg

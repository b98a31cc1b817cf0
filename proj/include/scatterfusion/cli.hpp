#pragma once

#include <string>
#include <vector>

namespace scatterfusion {

// Entry point behind the executable; args exclude the program name. Returns
// the process exit code: 0 success, 1 data/contract failures, 2 usage errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace scatterfusion

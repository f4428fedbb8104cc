#pragma once

#include <string>
#include <vector>

namespace caad {

// Command-line entry point. Returns 0 on success, 1 on usage errors, 2 on
// runtime errors. Honors CAAD_DATA_DIR (base directory for relative paths)
// and CAAD_THREADS (worker cap for parallel sections).
int run_cli(const std::vector<std::string>& args);

}  // namespace caad

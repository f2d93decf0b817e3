#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stic::cli {

enum ExitCode : int {
  kOk = 0,
  kViolations = 1,
  kUsage = 2,       // bad flags, config or parameters
  kInput = 3,       // unreadable inputs, ingestion or generation failure
  kSkipRate = 4,
  kRunFailed = 5,   // any other fatal error during a run
};

// Entry point shared by the binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stic::cli

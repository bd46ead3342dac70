#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbot::cli {

enum ExitCode : int {
  kOk = 0,
  kError = 1,         // bad input, I/O failure, solver error
  kUsage = 2,         // command-line parse error
  kNotConverged = 3,  // a solver missed its tolerance (see --allow-nonconverged)
  kDiverged = 4,      // gradient flow aborted
};

/// Runs the tool in-process. `args` is the full argument vector including the
/// program name. Summaries go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mbot::cli

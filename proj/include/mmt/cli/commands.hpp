#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmt::cli {

enum ExitCode : int { kOk = 0, kConfigOrDataError = 1, kNumericalFailure = 2 };

/// Entry point shared by the `mmt` binary and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmt::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gpsr::cli {

/// Exit codes: 0 ok, 1 internal error, 2 malformed input, 3 dimension or
/// shape mismatch.
enum ExitCode : int { kOk = 0, kInternal = 1, kInput = 2, kShape = 3 };

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gpsr::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdev::cli {

/// Exit statuses of the command-line tool.
enum Exit : int { kOk = 0, kAssertionFailure = 1, kUsageError = 2 };

/// Runs `mdev <command> [flags]`. Artifacts go to --out; the summary table
/// goes to `out`, warnings and errors to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdev::cli

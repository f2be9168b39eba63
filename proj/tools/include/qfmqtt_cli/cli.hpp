#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qfmqtt::cli {

enum ExitCode : int { kSuccess = 0, kEstimationFailure = 1, kUsageError = 2 };

/// Runs `qfmqtt <command> ...`; args excludes the program name. Help and
/// progress go to `out`, error JSON to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qfmqtt::cli

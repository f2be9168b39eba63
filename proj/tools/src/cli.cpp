#include "qfmqtt_cli/cli.hpp"

#include <ostream>

#include "common.hpp"
#include "qfmqtt/version.hpp"

namespace qfmqtt::cli {

namespace {

constexpr const char* kUsage =
    "usage: qfmqtt <command> [options]\n"
    "\n"
    "commands:\n"
    "  estimate   quantile treatment effects on the treated from a panel file\n"
    "  simulate   Monte Carlo study on a simulated design\n"
    "\n"
    "Run 'qfmqtt <command> --help' for the options of a command.\n";

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    report_error({}, err, error_json(kUsageError, "usage", "missing command (expected estimate or simulate)"));
    err << kUsage;
    return kUsageError;
  }
  const std::string& command = args.front();
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (command == "estimate") return run_estimate(rest, out, err);
    if (command == "simulate") return run_simulate(rest, out, err);
  } catch (const HelpRequested& help) {
    out << help.text;
    return kSuccess;
  }
  if (command == "--help" || command == "-h" || command == "help") {
    out << kUsage;
    return kSuccess;
  }
  if (command == "--version") {
    out << "qfmqtt " << kVersion << '\n';
    return kSuccess;
  }
  report_error({}, err, error_json(kUsageError, "usage", "unknown command '" + command + "'"));
  return kUsageError;
}

}  // namespace qfmqtt::cli

#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/quantile.hpp"
#include "qfmqtt_cli/cli.hpp"
#include "qfmqtt/serialize.hpp"

namespace qfmqtt::cli {

/// "0.1,0.5,0.9" or "start:stop:step" (inclusive); must be strictly increasing in (0,1).
std::vector<Quantile> parse_tau_grid(const std::string& text);

/// Fill options of `app` that were not given on the command line from a JSON
/// object whose keys are option names without dashes (`boot_B` or `boot-B`).
void apply_config(CLI::App& app, const Json& config);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);
void ensure_directory(const std::filesystem::path& dir);

/// Wall-clock sections recorded into the manifest.
class Timings {
public:
  void start(const std::string& name);
  void stop(const std::string& name);
  Json to_json() const;

private:
  std::map<std::string, std::chrono::steady_clock::time_point> open_;
  std::vector<std::pair<std::string, double>> done_;
};

/// config: the resolved options; outputs: file names written to the output directory.
Json make_manifest(const std::string& command, const std::vector<std::string>& args, const Json& config,
                   const Timings& timings, const std::vector<std::string>& outputs);


int run_estimate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_simulate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// {"error": {"code", "kind", "message"}}
Json error_json(int code, const std::string& kind, const std::string& message);

/// Print the error JSON to `err` and, when out_dir is set, write it to out_dir/error.json.
void report_error(const std::filesystem::path& out_dir, std::ostream& err, const Json& error);

/// Parse command arguments (program and command name excluded).
void parse_args(CLI::App& app, const std::vector<std::string>& args);

/// Thrown by parse_args when help was requested.
struct HelpRequested {
  std::string text;
};

/// Run body and map exceptions to exit codes: usage and input errors give 2,
/// estimation and other failures give 1. out_dir may be filled in by body.
template <typename Body>
int guarded(const std::filesystem::path& out_dir, std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const HelpRequested&) {
    throw;
  } catch (const CLI::ParseError& e) {
    report_error(out_dir, err, error_json(kUsageError, "usage", e.what()));
    return kUsageError;
  } catch (const InputError& e) {
    report_error(out_dir, err, error_json(kUsageError, "input", e.what()));
    return kUsageError;
  } catch (const EstimationError& e) {
    report_error(out_dir, err, error_json(kEstimationFailure, "estimation", e.what()));
    return kEstimationFailure;
  } catch (const std::exception& e) {
    report_error(out_dir, err, error_json(kEstimationFailure, "internal", e.what()));
    return kEstimationFailure;
  }
}

}  // namespace qfmqtt::cli

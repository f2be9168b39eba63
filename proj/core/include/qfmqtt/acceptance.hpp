#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qfmqtt {

struct CriterionResult {
  int id = 0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  unsigned jobs = 1;
  /// When set, each criterion writes its report CSV and replicate JSON lines here.
  std::string out_dir;
  std::uint64_t seed = 20240601;
};

/// Ids of the simulation-based acceptance criteria (all except the property suite, 6).
std::vector<int> simulation_criteria();

/// Runs one simulation-based criterion at desk scale (R = 200, B = 300).
/// Estimation errors are reported as a failed criterion; an unknown id throws InputError.
CriterionResult run_acceptance_criterion(int id, const AcceptanceOptions& options);

}  // namespace qfmqtt

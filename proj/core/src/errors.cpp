#include "qfmqtt/errors.hpp"

#include <sstream>
#include <utility>

namespace qfmqtt {

namespace {
std::string rank_message(std::size_t column, const std::string& context) {
  std::ostringstream os;
  os << "rank-deficient design";
  if (!context.empty()) os << " in " << context;
  os << ": column " << column << " (0-based) is linearly dependent on the others";
  return os.str();
}

std::string gap_message(const std::string& what, double gap) {
  std::ostringstream os;
  os << what << " (final gap " << gap << ")";
  return os.str();
}
}  // namespace

RankDeficientError::RankDeficientError(std::size_t column, const std::string& context)
    : EstimationError(rank_message(column, context)), column_(column) {}

ConvergenceError::ConvergenceError(const std::string& what, double final_gap)
    : EstimationError(gap_message(what, final_gap)), final_gap_(final_gap) {}

FactorFitError::FactorFitError(const std::string& what, std::vector<double> best_trajectory)
    : EstimationError(what), trajectory_(std::move(best_trajectory)) {}

}  // namespace qfmqtt

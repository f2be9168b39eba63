#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfmqtt/dgp.hpp"
#include "qfmqtt/qfm.hpp"
#include "qfmqtt/quantile.hpp"

namespace qfmqtt {

enum class Estimator { nqtt, sqtt, oracle, gscm };

std::string_view to_string(Estimator estimator);
/// Accepts NQTT, SQTT, Oracle, GSCM in any case.
Estimator parse_estimator(std::string_view text);

inline constexpr int kDeskReplications = 200;
inline constexpr int kDeskBootstrap = 300;
inline constexpr int kFullReplications = 1000;
inline constexpr int kFullBootstrap = 1000;

struct McOptions {
  DgpSpec dgp;
  std::vector<Estimator> estimators{Estimator::nqtt, Estimator::sqtt, Estimator::oracle, Estimator::gscm};
  std::vector<Quantile> taus{Quantile(0.1), Quantile(0.25), Quantile(0.5), Quantile(0.75), Quantile(0.9)};
  int R = kDeskReplications;
  /// Bootstrap replicates for NQTT/SQTT; 0 skips inference (no SD or coverage).
  int B = kDeskBootstrap;
  int k_max = 8;
  double bandwidth = 0.5;
  int restarts = 3;
  /// GSCM candidate ranks; r_max = 0 means 5, or 8 for the quantile-variant family.
  int gscm_r_min = 2;
  int gscm_r_max = 0;
  /// Replications run concurrently on this many threads (0 = hardware).
  unsigned jobs = 1;
  /// Cells with more failed replications than this fraction are flagged invalid.
  double max_failure_rate = 0.05;
  bool full_scale = false;

  void validate() const;
};

/// One estimator at one quantile in one replication.
struct McRecord {
  int replication = 0;
  double tau = 0.5;
  Estimator estimator = Estimator::nqtt;
  bool ok = false;
  double delta = std::numeric_limits<double>::quiet_NaN();
  double delta0 = std::numeric_limits<double>::quiet_NaN();
  int r = 0;
  /// Bootstrap output; NaN when no bootstrap ran.
  double boot_sd = std::numeric_limits<double>::quiet_NaN();
  double ci_lower = std::numeric_limits<double>::quiet_NaN();
  double ci_upper = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct CellMetrics {
  double bias = 0.0;
  double rmse = 0.0;
  /// Spread of the point estimates across replications (n - 1 divisor).
  double empirical_sd = std::numeric_limits<double>::quiet_NaN();
  /// Mean bootstrap standard deviation; NaN without bootstrap.
  double sd = std::numeric_limits<double>::quiet_NaN();
  /// Share of replications with delta0 inside delta_hat -/+ 1.96 sd; NaN without bootstrap.
  double coverage = std::numeric_limits<double>::quiet_NaN();
};

/// Bias = mean(delta_hat - delta0), RMSE = sqrt(mean((delta_hat - delta0)^2)).
/// boot_sd is either empty or aligned with estimates.
CellMetrics compute_cell_metrics(std::span<const double> estimates, double delta0,
                                 std::span<const double> boot_sd = {});

struct McCell {
  double tau = 0.5;
  Estimator estimator = Estimator::nqtt;
  double delta0 = 0.0;
  int replications = 0;
  int failures = 0;
  CellMetrics metrics;
  double mean_r = 0.0;
  bool valid = true;
};

struct McReport {
  McOptions options;
  std::vector<McCell> cells;
  /// Ordered by replication, then tau, then estimator.
  std::vector<McRecord> records;
  double seconds = 0.0;

  /// Throws InputError when the cell was not requested.
  const McCell& cell(Quantile tau, Estimator estimator) const;
  bool all_valid() const;
};

/// Replication j simulates with (dgp.seed, replication j). Factor restarts and
/// bootstrap draws use their own substreams of (seed, j), so every estimator
/// in a replication sees the same panel and results do not depend on `jobs`.
McReport run_mc(const McOptions& options);

/// One row per (tau, estimator): family,N,T,R,B,tau,estimator,delta0,bias,rmse,
/// empirical_sd,sd,coverage,mean_r,failures,valid.
void write_report_csv(std::ostream& out, const McReport& report);
/// One JSON object per record.
void write_records_jsonl(std::ostream& out, const McReport& report);

}  // namespace qfmqtt

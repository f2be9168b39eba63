#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qfmqtt/quantile.hpp"
#include "qfmqtt/sqr.hpp"

namespace qfmqtt {

enum class Stage1 { iqr, isqr };

std::string_view to_string(Stage1 stage);
/// Accepts "iqr" / "isqr" (case-insensitive); throws InputError otherwise.
Stage1 parse_stage1(std::string_view text);

struct FactorOptions {
  int restarts = 3;
  int max_iter = 100;
  /// Relative change in the objective that ends the alternation.
  double tol_obj = 1e-6;
  std::uint64_t seed = 0;
  /// Worker threads for the per-unit and per-period subproblems.
  unsigned jobs = 1;
};

struct QfmFit {
  Eigen::MatrixXd factors;   // T x r, F'F/T = I
  Eigen::MatrixXd loadings;  // N x r, Lambda'Lambda/N diagonal, non-increasing
  Quantile tau{0.5};
  int r = 0;
  Stage1 stage = Stage1::iqr;
  /// (1/NT) times the summed check (IQR) or smoothed (ISQR) loss.
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective after each iteration of the winning restart.
  std::vector<double> trace;
};

struct RankSelection {
  int r_hat = 0;
  int k = 0;
  Eigen::VectorXd sigma_diag;
  double threshold = 0.0;
};

struct NormalizedFactors {
  Eigen::MatrixXd factors;
  Eigen::MatrixXd loadings;
};

/// Rotate (F, Lambda) so that F'F/T = I and Lambda'Lambda/N is diagonal with
/// non-increasing entries, keeping F Lambda' fixed. Each loading column is
/// given a positive sum (first nonzero entry positive on a tie).
/// Throws DegenerateFactorError when F'F/T is singular.
NormalizedFactors normalize(const Eigen::Ref<const Eigen::MatrixXd>& factors,
                            const Eigen::Ref<const Eigen::MatrixXd>& loadings);

/// Iterated quantile regression on an N x T control block.
QfmFit fit_iqr(const Eigen::Ref<const Eigen::MatrixXd>& controls, Quantile tau, int r,
               const FactorOptions& options = {});

/// Iterated smoothed quantile regression on an N x T control block.
QfmFit fit_isqr(const Eigen::Ref<const Eigen::MatrixXd>& controls, Quantile tau, int r,
                const SmoothingSpec& smoothing, const FactorOptions& options = {});

/// Rank-minimisation selector: fit_iqr at rank k, count the diagonal entries of
/// Lambda'Lambda/N at or above sigma_1 * min(sqrt N, sqrt T)^(-2/3).
RankSelection select_rank(const Eigen::Ref<const Eigen::MatrixXd>& controls, Quantile tau,
                          int k = 8, const FactorOptions& options = {});

/// (1/NT) sum rho_tau(y_it - lambda_i' f_t)
double qfm_objective(const Eigen::Ref<const Eigen::MatrixXd>& controls, Quantile tau,
                     const Eigen::Ref<const Eigen::MatrixXd>& factors,
                     const Eigen::Ref<const Eigen::MatrixXd>& loadings);

/// Per-iteration objective as CSV with header `iteration,objective`.
void write_fit_trace(std::ostream& out, const QfmFit& fit);

}  // namespace qfmqtt

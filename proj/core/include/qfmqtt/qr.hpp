#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qfmqtt/quantile.hpp"

namespace qfmqtt {

/// Linear quantile regression problem: minimise sum_t w_t rho_tau(y_t - x_t' beta).
///
/// Non-owning: the design, response and weights must outlive the problem.
/// An empty weight vector means unit weights.
class QrProblem {
public:
  QrProblem(Eigen::Ref<const Eigen::MatrixXd> design, Eigen::Ref<const Eigen::VectorXd> response,
            Quantile tau);
  QrProblem(Eigen::Ref<const Eigen::MatrixXd> design, Eigen::Ref<const Eigen::VectorXd> response,
            Quantile tau, Eigen::Ref<const Eigen::VectorXd> weights);

  const Eigen::Ref<const Eigen::MatrixXd>& design() const noexcept { return design_; }
  const Eigen::Ref<const Eigen::VectorXd>& response() const noexcept { return response_; }
  const Eigen::Ref<const Eigen::VectorXd>& weights() const noexcept { return weights_; }
  Quantile tau() const noexcept { return tau_; }
  bool weighted() const noexcept { return weights_.size() != 0; }

  Eigen::Index rows() const noexcept { return design_.rows(); }
  Eigen::Index cols() const noexcept { return design_.cols(); }

private:
  Eigen::Ref<const Eigen::MatrixXd> design_;
  Eigen::Ref<const Eigen::VectorXd> response_;
  Quantile tau_;
  Eigen::Ref<const Eigen::VectorXd> weights_;
};

struct QrOptions {
  double tol_stat = 1e-6;
  /// Interior-point iteration cap.
  int max_iter = 200;
  /// Simplex pivot cap; 0 picks 20 * (n + p).
  int max_pivots = 0;
};

struct QrFit {
  Eigen::VectorXd coef;
  /// Indices of the p observations interpolated by the returned vertex.
  std::vector<Eigen::Index> basis;
  /// sum_t w_t rho_tau(residual_t)
  double objective = 0.0;
  int ipm_iterations = 0;
  int pivots = 0;
};

/// Cold solve: primal-dual interior point, then crossover to an optimal vertex.
///
/// When the minimiser is not unique the returned vertex is the end of a walk
/// along the optimal face that decreases the first coefficient; for an
/// intercept-only design this is the lower endpoint of the solution interval.
///
/// Throws RankDeficientError for a design without full column rank and
/// ConvergenceError when the pivot cap is exhausted.
QrFit solve_qr(const QrProblem& problem, const QrOptions& options = {});

/// Warm solve starting from a previously optimal basis. Falls back to the
/// cold path when the basis is unusable (wrong size or singular).
QrFit solve_qr_warm(const QrProblem& problem, std::span<const Eigen::Index> basis,
                    const QrOptions& options = {});

/// Convenience wrapper returning only the coefficients.
Eigen::VectorXd fit_qr(const QrProblem& problem, const QrOptions& options = {});

/// sum_t w_t rho_tau(y_t - x_t' beta)
double qr_objective(const QrProblem& problem, const Eigen::Ref<const Eigen::VectorXd>& beta);

/// Subgradient optimality certificate.
///
/// Returns max_j |sum_t w_t x_tj s_t| / sum_t w_t |x_tj| where s_t = psi_tau(r_t)
/// for non-interpolated observations and s_t in [tau - 1, tau] is chosen
/// optimally for observations with zero residual. Zero means beta is an exact
/// minimiser.
double stationarity_gap(const QrProblem& problem, const Eigen::Ref<const Eigen::VectorXd>& beta);

/// Throw RankDeficientError (with the offending column) unless the design has
/// full column rank. Also rejects n < p.
void require_full_column_rank(const Eigen::Ref<const Eigen::MatrixXd>& design,
                              const char* context);

}  // namespace qfmqtt

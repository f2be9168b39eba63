#pragma once

#include <Eigen/Dense>

#include "qfmqtt/qr.hpp"

namespace qfmqtt {

/// Bandwidth and kernel order for the smoothed check loss [tau - K(u/h)] u.
struct SmoothingSpec {
  double bandwidth = 0.5;
  /// Only the order-8 polynomial kernel is implemented.
  int kernel_order = 8;

  void validate() const;
};

struct SqrOptions {
  double tol_grad = 1e-8;
  int max_iter = 200;
};

struct SqrFit {
  Eigen::VectorXd coef;
  /// sum_t w_t [tau - K(r_t/h)] r_t
  double objective = 0.0;
  /// max-norm of the gradient of the weight-averaged smoothed loss
  double gradient_norm = 0.0;
  int iterations = 0;
};

double sqr_objective(const QrProblem& problem, const SmoothingSpec& smoothing,
                     const Eigen::Ref<const Eigen::VectorXd>& beta);

/// Gradient of the weight-averaged smoothed loss with respect to beta.
Eigen::VectorXd sqr_gradient(const QrProblem& problem, const SmoothingSpec& smoothing,
                             const Eigen::Ref<const Eigen::VectorXd>& beta);

/// Damped Newton from `start`; when the Hessian is not positive definite the
/// step uses its eigen-decomposition with absolute, floored eigenvalues. The smoothed loss is
/// not convex, so the result is the stationary point reached from `start`.
SqrFit solve_sqr(const QrProblem& problem, const SmoothingSpec& smoothing,
                 const Eigen::Ref<const Eigen::VectorXd>& start, const SqrOptions& options = {});

/// Smoothed fit started from the unsmoothed quantile regression solution.
Eigen::VectorXd fit_sqr(const QrProblem& problem, const SmoothingSpec& smoothing,
                        const SqrOptions& options = {});

}  // namespace qfmqtt

#include "qfmqtt/sqr.hpp"

#include <cmath>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/kernel.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void SmoothingSpec::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InputError("smoothing bandwidth must be positive");
  }
  if (kernel_order != 8) {
    throw InputError("only the order-8 kernel is available (kernel_order = 8)");
  }
}

namespace {

struct Evaluation {
  double value = 0.0;
  VectorXd gradient;
  MatrixXd hessian;
};

double weight_at(const QrProblem& problem, Index t) {
  return problem.weighted() ? problem.weights()[t] : 1.0;
}

double total_weight(const QrProblem& problem) {
  return problem.weighted() ? problem.weights().sum() : static_cast<double>(problem.rows());
}

// Value is the plain sum; gradient and Hessian are of the weight-averaged loss.
Evaluation evaluate(const QrProblem& problem, double h, const VectorXd& beta, bool with_hessian) {
  const Index p = problem.cols();
  const double tau = problem.tau();
  const VectorXd r = problem.response() - problem.design() * beta;
  Evaluation ev;
  ev.gradient = VectorXd::Zero(p);
  if (with_hessian) ev.hessian = MatrixXd::Zero(p, p);
  VectorXd curvature(with_hessian ? r.size() : 0);
  for (Index t = 0; t < r.size(); ++t) {
    const double w = weight_at(problem, t);
    const SmoothedLoss loss = smoothed_loss(r[t], tau, h);
    ev.value += w * loss.value;
    ev.gradient -= (w * loss.first) * problem.design().row(t).transpose();
    if (with_hessian) curvature[t] = w * loss.second;
  }
  const double scale = 1.0 / total_weight(problem);
  ev.gradient *= scale;
  if (with_hessian) {
    ev.hessian = problem.design().transpose() * curvature.asDiagonal() * problem.design();
    ev.hessian *= scale;
  }
  return ev;
}

double value_at(const QrProblem& problem, double h, const VectorXd& beta) {
  const VectorXd r = problem.response() - problem.design() * beta;
  double total = 0.0;
  for (Index t = 0; t < r.size(); ++t) {
    total += weight_at(problem, t) * smoothed_loss(r[t], problem.tau(), h).value;
  }
  return total;
}

// Newton step on |H|: negative curvature is flipped so the step still descends along it.
VectorXd newton_direction(const MatrixXd& H, const VectorXd& g, double fallback_curvature) {
  Eigen::LLT<MatrixXd> llt(H);
  if (llt.info() == Eigen::Success && H.diagonal().minCoeff() > 0.0) {
    const VectorXd d = -llt.solve(g);
    if (d.allFinite() && d.dot(g) < 0.0) return d;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  if (es.info() == Eigen::Success) {
    const VectorXd& lambda = es.eigenvalues();
    const double floor = std::max(1e-8 * lambda.cwiseAbs().maxCoeff(), 1e-3 * fallback_curvature);
    const VectorXd inv = lambda.cwiseAbs().cwiseMax(floor).cwiseInverse();
    const MatrixXd& V = es.eigenvectors();
    const VectorXd d = -(V * inv.asDiagonal() * (V.transpose() * g));
    if (d.allFinite() && d.dot(g) < 0.0) return d;
  }
  return -g / fallback_curvature;
}

}  // namespace

double sqr_objective(const QrProblem& problem, const SmoothingSpec& smoothing,
                     const Eigen::Ref<const VectorXd>& beta) {
  smoothing.validate();
  return value_at(problem, smoothing.bandwidth, beta);
}

VectorXd sqr_gradient(const QrProblem& problem, const SmoothingSpec& smoothing,
                      const Eigen::Ref<const VectorXd>& beta) {
  smoothing.validate();
  return evaluate(problem, smoothing.bandwidth, beta, false).gradient;
}

SqrFit solve_sqr(const QrProblem& problem, const SmoothingSpec& smoothing,
                 const Eigen::Ref<const VectorXd>& start, const SqrOptions& options) {
  smoothing.validate();
  if (start.size() != problem.cols()) throw InputError("starting point has the wrong length");
  const double h = smoothing.bandwidth;
  const double tw = total_weight(problem);
  // Curvature used when the Hessian carries no information (all residuals outside the band).
  double row_scale = 0.0;
  for (Index t = 0; t < problem.rows(); ++t) {
    row_scale += weight_at(problem, t) * problem.design().row(t).squaredNorm();
  }
  const double fallback_curvature = std::max(row_scale / tw / h, 1e-12);

  SqrFit fit;
  VectorXd beta = start;
  for (int it = 0; it <= options.max_iter; ++it) {
    const Evaluation ev = evaluate(problem, h, beta, true);
    fit.gradient_norm = ev.gradient.cwiseAbs().maxCoeff();
    fit.iterations = it;
    if (fit.gradient_norm <= options.tol_grad) break;
    if (it == options.max_iter) {
      throw ConvergenceError("smoothed quantile regression did not converge", fit.gradient_norm);
    }

    const double f0 = ev.value / tw;
    bool moved = false;
    for (int kind = 0; kind < 2 && !moved; ++kind) {
      const VectorXd d = kind == 0 ? newton_direction(ev.hessian, ev.gradient, fallback_curvature)
                                   : VectorXd(-ev.gradient / fallback_curvature);
      const double slope = ev.gradient.dot(d);
      double step = 1.0;
      for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
        const VectorXd trial = beta + step * d;
        const double f1 = value_at(problem, h, trial) / tw;
        if (f1 < f0 && f1 <= f0 + 1e-4 * step * slope) {
          beta = trial;
          moved = true;
          break;
        }
      }
    }
    if (!moved) {
      // No representable decrease: accept if the gradient is at round-off level.
      if (fit.gradient_norm <= 1e-6) break;
      throw ConvergenceError("smoothed quantile regression line search failed", fit.gradient_norm);
    }
  }
  fit.coef = beta;
  fit.objective = value_at(problem, h, beta);
  return fit;
}

VectorXd fit_sqr(const QrProblem& problem, const SmoothingSpec& smoothing, const SqrOptions& options) {
  smoothing.validate();
  const VectorXd start = fit_qr(problem);
  return solve_sqr(problem, smoothing, start, options).coef;
}

}  // namespace qfmqtt

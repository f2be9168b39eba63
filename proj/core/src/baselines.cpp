#include "qfmqtt/baselines.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/qfm.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_rank(const Eigen::Ref<const MatrixXd>& controls, int r) {
  if (!controls.allFinite()) throw InputError("control outcomes contain non-finite values");
  if (r < 1 || r >= std::min(controls.rows(), controls.cols())) {
    throw InputError("PCA rank " + std::to_string(r) + " must lie in [1, min(N, T) - 1]");
  }
}

// Strict comparison keeps the smaller rank on ties.
int argmin_ic(const std::map<int, double>& ic) {
  int best = ic.begin()->first;
  for (const auto& [r, value] : ic) {
    if (value < ic.at(best)) best = r;
  }
  return best;
}

}  // namespace

PcaFit pca_factors(const Eigen::Ref<const MatrixXd>& controls, int r) {
  check_rank(controls, r);
  const double T = static_cast<double>(controls.cols());
  Eigen::BDCSVD<MatrixXd> svd(controls, Eigen::ComputeThinV);
  const MatrixXd F = std::sqrt(T) * svd.matrixV().leftCols(r);
  const MatrixXd L = controls * F / T;
  const NormalizedFactors nf = normalize(F, L);
  PcaFit fit;
  fit.factors = nf.factors;
  fit.loadings = nf.loadings;
  fit.r = r;
  return fit;
}

std::map<int, double> information_criteria(const Eigen::Ref<const MatrixXd>& controls, int r_min, int r_max) {
  if (r_min < 1 || r_max < r_min) throw InputError("IC rank range must satisfy 1 <= r_min <= r_max");
  check_rank(controls, r_max);
  const double N = static_cast<double>(controls.rows());
  const double T = static_cast<double>(controls.cols());
  const VectorXd sv = Eigen::BDCSVD<MatrixXd>(controls).singularValues();
  const double penalty = (N + T) / (N * T) * std::log(N * T / (N + T));
  // Residual sums below this are round-off of an exactly low-rank block.
  const double floor = std::max(1e-20 * sv.squaredNorm(), std::numeric_limits<double>::min());
  std::map<int, double> ic;
  for (int r = r_min; r <= r_max; ++r) {
    const double ssr = std::max(sv.tail(sv.size() - r).squaredNorm(), floor);
    ic[r] = std::log(ssr / (N * T)) + r * penalty;
  }
  return ic;
}

int select_rank_ic(const Eigen::Ref<const MatrixXd>& controls, int r_min, int r_max) {
  return argmin_ic(information_criteria(controls, r_min, r_max));
}

GscmResult gscm_qtt(const PanelData& panel, const std::vector<Quantile>& taus, int r_min, int r_max) {
  const SplitPanel split = split_control_treated(panel);
  GscmResult out;
  const std::map<int, double> ic = information_criteria(split.controls, r_min, r_max);
  out.pca = pca_factors(split.controls, argmin_ic(ic));
  out.pca.ic_values = ic;
  const VectorXd y1 = split.treated.row(0).transpose();
  const VectorXd d1 = panel.treatment().d;
  for (Quantile tau : taus) {
    QttEstimate est = estimate_qtt(y1, d1, out.pca.factors, tau);
    est.estimator = "GSCM";
    out.estimates.push_back(std::move(est));
  }
  return out;
}

QttEstimate oracle_qtt(const PanelData& panel, Quantile tau, const Eigen::Ref<const MatrixXd>& true_factors) {
  if (true_factors.rows() != panel.periods()) throw InputError("true factors must span all periods");
  const SplitPanel split = split_control_treated(panel);
  QttEstimate est = estimate_qtt(split.treated.row(0).transpose(), panel.treatment().d, true_factors, tau);
  est.estimator = "Oracle";
  return est;
}

}  // namespace qfmqtt

#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "qfmqtt/panel.hpp"
#include "qfmqtt/qtt.hpp"
#include "qfmqtt/quantile.hpp"

namespace qfmqtt {

/// Principal-component factors of a control block.
struct PcaFit {
  Eigen::MatrixXd factors;   // T x r, F'F/T = I
  Eigen::MatrixXd loadings;  // N x r, least squares on the factors
  int r = 0;
  /// IC(r) for every candidate rank examined by select_rank_ic.
  std::map<int, double> ic_values;
};

/// sqrt(T)-scaled leading right singular vectors of the N x T controls, with
/// the column sign convention of normalize().
PcaFit pca_factors(const Eigen::Ref<const Eigen::MatrixXd>& controls, int r);

/// IC(r) = ln(SSR/(NT)) + r (N+T)/(NT) ln(NT/(N+T)) for r in [r_min, r_max].
std::map<int, double> information_criteria(const Eigen::Ref<const Eigen::MatrixXd>& controls, int r_min, int r_max);

/// argmin of IC over [r_min, r_max]; ties go to the smaller rank.
int select_rank_ic(const Eigen::Ref<const Eigen::MatrixXd>& controls, int r_min, int r_max);

struct GscmResult {
  PcaFit pca;
  /// One estimate per requested quantile, all using the same PCA factors.
  std::vector<QttEstimate> estimates;
};

/// PCA-based comparator: IC rank, PCA factors once, then the second stage per
/// quantile on the first treated unit.
GscmResult gscm_qtt(const PanelData& panel, const std::vector<Quantile>& taus, int r_min = 2, int r_max = 5);

/// Infeasible comparator: second stage with the true factors (T x K).
QttEstimate oracle_qtt(const PanelData& panel, Quantile tau, const Eigen::Ref<const Eigen::MatrixXd>& true_factors);

}  // namespace qfmqtt

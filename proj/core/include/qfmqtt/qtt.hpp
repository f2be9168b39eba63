#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qfmqtt/qfm.hpp"
#include "qfmqtt/quantile.hpp"

namespace qfmqtt {

/// Second-stage estimate for one treated unit at one quantile.
struct QttEstimate {
  double tau = 0.5;
  double delta = 0.0;
  Eigen::VectorXd lambda1;
  int r = 0;
  Stage1 stage1 = Stage1::iqr;
  /// "NQTT", "SQTT", "GSCM" or "Oracle".
  std::string estimator;
};

/// Estimator label for a factor-model QTT: NQTT for IQR factors, SQTT for ISQR.
std::string_view estimator_name(Stage1 stage);

/// Quantile regression of y1 on [F_hat | d1] (no intercept).
///
/// d1 must be a monotone 0/1 series with both regimes present. Throws
/// CollinearityError("treatment indicator spanned by factors") when the
/// smallest singular value of the column-normalized design is below 1e-8.
QttEstimate estimate_qtt(const Eigen::Ref<const Eigen::VectorXd>& y1, const Eigen::Ref<const Eigen::VectorXd>& d1,
                         const Eigen::Ref<const Eigen::MatrixXd>& F_hat, Quantile tau,
                         Stage1 stage1 = Stage1::iqr);

/// Fitted conditional quantile path lambda1' f_t for every period.
Eigen::VectorXd predict_quantile_path(const Eigen::Ref<const Eigen::VectorXd>& lambda1,
                                      const Eigen::Ref<const Eigen::MatrixXd>& F_hat);

/// Linear-in-parameter effect paths g(t; zeta), with s = t - T0 >= 1 in the post period.
enum class GForm {
  constant,   // zeta0
  decay,      // zeta0 + zeta1 / s
  linear,     // zeta0 + zeta1 * s
  quadratic,  // zeta0 + zeta1 * s + zeta2 * s^2
};

std::string_view to_string(GForm form);
GForm parse_g_form(std::string_view text);
int parameter_count(GForm form);
/// Basis values b_j(s) for one post-period offset s.
Eigen::VectorXd g_basis(GForm form, double s);

struct TimeVaryingQtt {
  GForm g_form = GForm::constant;
  Eigen::VectorXd zeta;
  Eigen::VectorXd lambda1;
  double tau = 0.5;
  int r = 0;

  /// g(t; zeta) at post-period offset s.
  double effect(double s) const;
};

/// Quantile regression of y1 on [F_hat | b_1(s) d1 | ... ].
TimeVaryingQtt estimate_qtt_time_varying(const Eigen::Ref<const Eigen::VectorXd>& y1,
                                         const Eigen::Ref<const Eigen::VectorXd>& d1,
                                         const Eigen::Ref<const Eigen::MatrixXd>& F_hat, Quantile tau, GForm form);

/// delta_t = zeta0 + zeta1' f_t.
struct FactorInteractedQtt {
  double zeta0 = 0.0;
  Eigen::VectorXd zeta1;
  Eigen::VectorXd lambda1;
  double tau = 0.5;
  int r = 0;
};

/// Quantile regression of y1 on [F_hat | F_hat * d1 | d1]. Needs at least r + 1
/// post-treatment periods.
FactorInteractedQtt estimate_qtt_factor_interacted(const Eigen::Ref<const Eigen::VectorXd>& y1,
                                                   const Eigen::Ref<const Eigen::VectorXd>& d1,
                                                   const Eigen::Ref<const Eigen::MatrixXd>& F_hat, Quantile tau);

/// Outcome for one treated unit of a batch: an estimate or the error message.
struct UnitQtt {
  int unit = 0;
  std::optional<QttEstimate> estimate;
  std::string error;
};

/// One second stage per row of the treated block (m x T), sharing F_hat.
/// Failures are recorded per unit and do not abort the batch.
std::vector<UnitQtt> estimate_qtt_multi(const Eigen::Ref<const Eigen::MatrixXd>& treated,
                                        const Eigen::Ref<const Eigen::MatrixXd>& d,
                                        const Eigen::Ref<const Eigen::MatrixXd>& F_hat, Quantile tau,
                                        Stage1 stage1 = Stage1::iqr);

/// Throws CollinearityError(message) when the smallest singular value of the
/// design with unit-norm columns is below 1e-8.
void require_well_posed(const Eigen::Ref<const Eigen::MatrixXd>& design, const std::string& message);

}  // namespace qfmqtt

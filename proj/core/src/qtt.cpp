#include "qfmqtt/qtt.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/qr.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view estimator_name(Stage1 stage) { return stage == Stage1::iqr ? "NQTT" : "SQTT"; }

namespace {

// Returns T0, the number of leading zeros.
Index check_treatment(const Eigen::Ref<const VectorXd>& d1, Index T) {
  if (d1.size() != T) throw InputError("treatment indicator length does not match the outcome series");
  Index T0 = -1;
  for (Index t = 0; t < T; ++t) {
    if (d1[t] != 0.0 && d1[t] != 1.0) throw InputError("treatment indicator must be 0 or 1");
    if (d1[t] == 1.0 && T0 < 0) T0 = t;
    if (d1[t] == 0.0 && T0 >= 0) throw InputError("non-monotone treatment indicator");
  }
  if (T0 < 0) throw InputError("treatment indicator has no treated period");
  if (T0 == 0) throw InputError("treatment indicator has no pre-treatment period");
  return T0;
}

void check_shapes(const Eigen::Ref<const VectorXd>& y1, const Eigen::Ref<const MatrixXd>& F_hat) {
  if (F_hat.rows() != y1.size()) throw InputError("factor matrix rows do not match the outcome series");
  if (F_hat.cols() < 1) throw InputError("factor matrix has no columns");
  if (!y1.allFinite() || !F_hat.allFinite()) throw InputError("second-stage inputs must be finite");
}

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

void require_well_posed(const Eigen::Ref<const MatrixXd>& design, const std::string& message) {
  if (design.rows() < design.cols()) throw CollinearityError(message);
  MatrixXd unit = design;
  for (Index j = 0; j < unit.cols(); ++j) {
    const double norm = unit.col(j).norm();
    if (norm == 0.0) throw CollinearityError(message);
    unit.col(j) /= norm;
  }
  const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(unit).singularValues();
  if (!(sv.minCoeff() >= 1e-8)) throw CollinearityError(message);
}

QttEstimate estimate_qtt(const Eigen::Ref<const VectorXd>& y1, const Eigen::Ref<const VectorXd>& d1,
                         const Eigen::Ref<const MatrixXd>& F_hat, Quantile tau, Stage1 stage1) {
  check_shapes(y1, F_hat);
  check_treatment(d1, y1.size());
  const Index T = y1.size(), r = F_hat.cols();
  MatrixXd design(T, r + 1);
  design << F_hat, d1;
  require_well_posed(F_hat, "factor columns are collinear");
  require_well_posed(design, "treatment indicator spanned by factors");
  const VectorXd coef = fit_qr(QrProblem(design, y1, tau));

  QttEstimate est;
  est.tau = tau;
  est.delta = coef[r];
  est.lambda1 = coef.head(r);
  est.r = static_cast<int>(r);
  est.stage1 = stage1;
  est.estimator = std::string(estimator_name(stage1));
  return est;
}

VectorXd predict_quantile_path(const Eigen::Ref<const VectorXd>& lambda1, const Eigen::Ref<const MatrixXd>& F_hat) {
  if (lambda1.size() != F_hat.cols()) throw InputError("loading length does not match the factor rank");
  return F_hat * lambda1;
}

std::string_view to_string(GForm form) {
  switch (form) {
    case GForm::constant: return "constant";
    case GForm::decay: return "decay";
    case GForm::linear: return "linear";
    case GForm::quadratic: return "quadratic";
  }
  return "constant";
}

GForm parse_g_form(std::string_view text) {
  const std::string l = lower(text);
  for (GForm f : {GForm::constant, GForm::decay, GForm::linear, GForm::quadratic}) {
    if (l == to_string(f)) return f;
  }
  throw InputError("unknown effect path '" + std::string(text) + "' (expected constant, decay, linear or quadratic)");
}

int parameter_count(GForm form) {
  switch (form) {
    case GForm::constant: return 1;
    case GForm::decay:
    case GForm::linear: return 2;
    case GForm::quadratic: return 3;
  }
  return 1;
}

VectorXd g_basis(GForm form, double s) {
  VectorXd b(parameter_count(form));
  b[0] = 1.0;
  if (form == GForm::decay) b[1] = 1.0 / s;
  if (form == GForm::linear || form == GForm::quadratic) b[1] = s;
  if (form == GForm::quadratic) b[2] = s * s;
  return b;
}

double TimeVaryingQtt::effect(double s) const { return g_basis(g_form, s).dot(zeta); }

TimeVaryingQtt estimate_qtt_time_varying(const Eigen::Ref<const VectorXd>& y1, const Eigen::Ref<const VectorXd>& d1,
                                         const Eigen::Ref<const MatrixXd>& F_hat, Quantile tau, GForm form) {
  check_shapes(y1, F_hat);
  const Index T0 = check_treatment(d1, y1.size());
  const Index T = y1.size(), r = F_hat.cols(), k = parameter_count(form);
  MatrixXd design = MatrixXd::Zero(T, r + k);
  design.leftCols(r) = F_hat;
  for (Index t = T0; t < T; ++t) design.row(t).tail(k) = g_basis(form, static_cast<double>(t - T0 + 1)).transpose();
  require_well_posed(F_hat, "factor columns are collinear");
  require_well_posed(design, "effect-path basis spanned by factors");
  const VectorXd coef = fit_qr(QrProblem(design, y1, tau));

  TimeVaryingQtt out;
  out.g_form = form;
  out.zeta = coef.tail(k);
  out.lambda1 = coef.head(r);
  out.tau = tau;
  out.r = static_cast<int>(r);
  return out;
}

FactorInteractedQtt estimate_qtt_factor_interacted(const Eigen::Ref<const VectorXd>& y1,
                                                   const Eigen::Ref<const VectorXd>& d1,
                                                   const Eigen::Ref<const MatrixXd>& F_hat, Quantile tau) {
  check_shapes(y1, F_hat);
  const Index T0 = check_treatment(d1, y1.size());
  const Index T = y1.size(), r = F_hat.cols();
  if (T - T0 < r + 1) {
    throw InputError("factor-interacted effects need at least r + 1 = " + std::to_string(r + 1) +
                     " post-treatment periods (got " + std::to_string(T - T0) + ")");
  }
  MatrixXd design(T, 2 * r + 1);
  design << F_hat, d1.asDiagonal() * F_hat, d1;
  require_well_posed(F_hat, "factor columns are collinear");
  require_well_posed(design, "treatment indicator spanned by factors");
  const VectorXd coef = fit_qr(QrProblem(design, y1, tau));

  FactorInteractedQtt out;
  out.lambda1 = coef.head(r);
  out.zeta1 = coef.segment(r, r);
  out.zeta0 = coef[2 * r];
  out.tau = tau;
  out.r = static_cast<int>(r);
  return out;
}

std::vector<UnitQtt> estimate_qtt_multi(const Eigen::Ref<const MatrixXd>& treated, const Eigen::Ref<const MatrixXd>& d,
                                        const Eigen::Ref<const MatrixXd>& F_hat, Quantile tau, Stage1 stage1) {
  if (d.rows() != treated.rows() || d.cols() != treated.cols()) {
    throw InputError("treatment indicators must match the treated block");
  }
  std::vector<UnitQtt> out(static_cast<std::size_t>(treated.rows()));
  for (Index i = 0; i < treated.rows(); ++i) {
    UnitQtt& u = out[static_cast<std::size_t>(i)];
    u.unit = static_cast<int>(i) + 1;
    try {
      u.estimate = estimate_qtt(treated.row(i).transpose(), d.row(i).transpose(), F_hat, tau, stage1);
    } catch (const std::exception& e) {
      u.error = e.what();
    }
  }
  return out;
}

}  // namespace qfmqtt

#include "qfmqtt/qfm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/kernel.hpp"
#include "qfmqtt/parallel.hpp"
#include "qfmqtt/qr.hpp"
#include "qfmqtt/rng.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Stage1 stage) { return stage == Stage1::iqr ? "IQR" : "ISQR"; }

Stage1 parse_stage1(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "iqr") return Stage1::iqr;
  if (lower == "isqr") return Stage1::isqr;
  throw InputError("unknown first-stage estimator '" + std::string(text) + "' (expected iqr or isqr)");
}

NormalizedFactors normalize(const Eigen::Ref<const MatrixXd>& factors,
                            const Eigen::Ref<const MatrixXd>& loadings) {
  const Index T = factors.rows(), N = loadings.rows(), r = factors.cols();
  if (loadings.cols() != r) throw InputError("factor and loading ranks differ");
  if (T == 0 || N == 0 || r == 0) throw InputError("empty factor or loading matrix");

  const MatrixXd S = factors.transpose() * factors / static_cast<double>(T);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const VectorXd ev = es.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300)) || !ev.allFinite()) {
    throw DegenerateFactorError();
  }
  const MatrixXd& V = es.eigenvectors();
  const MatrixXd root = V * ev.cwiseSqrt().asDiagonal() * V.transpose();
  const MatrixXd inv_root = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  const MatrixXd F1 = factors * inv_root;
  const MatrixXd L1 = loadings * root;

  Eigen::SelfAdjointEigenSolver<MatrixXd> ls(L1.transpose() * L1 / static_cast<double>(N));
  // Eigen sorts ascending; reverse for non-increasing loading variances.
  const MatrixXd Q = ls.eigenvectors().rowwise().reverse();

  NormalizedFactors out{F1 * Q, L1 * Q};
  for (Index j = 0; j < r; ++j) {
    const auto col = out.loadings.col(j);
    const double sum = col.sum();
    bool flip = false;
    if (std::fabs(sum) > 1e-12 * col.cwiseAbs().sum()) {
      flip = sum < 0.0;
    } else {
      for (Index i = 0; i < N; ++i) {
        if (col[i] != 0.0) {
          flip = col[i] < 0.0;
          break;
        }
      }
    }
    if (flip) {
      out.factors.col(j) *= -1.0;
      out.loadings.col(j) *= -1.0;
    }
  }
  return out;
}

double qfm_objective(const Eigen::Ref<const MatrixXd>& controls, Quantile tau,
                     const Eigen::Ref<const MatrixXd>& factors,
                     const Eigen::Ref<const MatrixXd>& loadings) {
  const MatrixXd resid = controls - loadings * factors.transpose();
  double total = 0.0;
  for (Index t = 0; t < resid.cols(); ++t) {
    for (Index i = 0; i < resid.rows(); ++i) total += check_loss(resid(i, t), tau);
  }
  return total / static_cast<double>(resid.size());
}

namespace {

void check_inputs(const Eigen::Ref<const MatrixXd>& controls, int r) {
  if (!controls.allFinite()) throw InputError("control outcomes contain non-finite values");
  if (r < 1) throw InputError("factor rank must be at least 1");
  if (r >= controls.rows() || r >= controls.cols()) {
    throw InputError("factor rank " + std::to_string(r) + " must be below both N = " +
                     std::to_string(controls.rows()) + " and T = " + std::to_string(controls.cols()));
  }
}

MatrixXd starting_factors(Index T, int r, std::uint64_t seed, int restart) {
  Philox rng = make_rng(seed, {0x51f0ULL, static_cast<std::uint64_t>(restart), static_cast<std::uint64_t>(r)});
  std::normal_distribution<double> normal;
  MatrixXd draw(T, r);
  for (Index j = 0; j < r; ++j) {
    for (Index t = 0; t < T; ++t) draw(t, j) = normal(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(draw);
  return qr.householderQ() * MatrixXd::Identity(T, r) * std::sqrt(static_cast<double>(T));
}

struct RestartOutcome {
  MatrixXd factors, loadings;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

// One alternation from a fixed starting factor matrix. Y is N x T, Yt = Y'.
class Alternation {
public:
  Alternation(const MatrixXd& Y, Quantile tau, int r, const std::optional<SmoothingSpec>& smoothing,
              const FactorOptions& options)
      : Y_(Y), Yt_(Y.transpose()), tau_(tau), r_(r), smoothing_(smoothing), options_(options),
        loading_basis_(Y.rows()), factor_basis_(Y.cols()) {}

  RestartOutcome run(MatrixXd F, RestartOutcome& progress) {
    const Index N = Y_.rows(), T = Y_.cols();
    MatrixXd L = MatrixXd::Zero(N, r_);
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= options_.max_iter; ++it) {
      const bool first = it == 1;
      loading_step(F, L, first);
      NormalizedFactors half = normalize(F, L);
      F = std::move(half.factors);
      L = std::move(half.loadings);
      const double objective = factor_step(L, F, first) / static_cast<double>(N * T);
      const NormalizedFactors nf = normalize(F, L);
      F = nf.factors;
      L = nf.loadings;
      progress.trace.push_back(objective);
      progress.iterations = it;
      progress.objective = objective;
      if (std::isfinite(previous) &&
          std::fabs(previous - objective) <= options_.tol_obj * std::fabs(previous)) {
        progress.converged = true;
        break;
      }
      if (objective == 0.0) {
        progress.converged = true;
        break;
      }
      previous = objective;
    }
    progress.factors = std::move(F);
    progress.loadings = std::move(L);
    return progress;
  }

private:
  void loading_step(const MatrixXd& F, MatrixXd& L, bool first) {
    parallel_for(static_cast<std::size_t>(Y_.rows()), options_.jobs, [&](std::size_t k) {
      const Index i = static_cast<Index>(k);
      const QrProblem problem(F, Yt_.col(i), tau_);
      VectorXd coef = solve_half(problem, loading_basis_[k], L.row(i).transpose(), first, nullptr);
      L.row(i) = coef.transpose();
    });
  }

  // Normalized loading columns are orthogonal; columns with negligible variance carry no
  // information about f_t and are held at their previous values.
  double factor_step(const MatrixXd& L, MatrixXd& F, bool first) {
    const VectorXd norms = L.colwise().norm().transpose();
    std::vector<Index> active;
    for (Index j = 0; j < L.cols(); ++j) {
      if (norms[j] > 1e-10 * norms.maxCoeff()) active.push_back(j);
    }
    if (active.empty()) throw DegenerateFactorError();
    if (active.size() != active_.size() || active != active_) {
      for (auto& basis : factor_basis_) basis.clear();
      active_ = active;
    }
    const bool full = static_cast<Index>(active.size()) == L.cols();
    const MatrixXd design = full ? L : L(Eigen::all, active);
    std::vector<double> objectives(static_cast<std::size_t>(Y_.cols()));
    parallel_for(static_cast<std::size_t>(Y_.cols()), options_.jobs, [&](std::size_t k) {
      const Index t = static_cast<Index>(k);
      const QrProblem problem(design, Y_.col(t), tau_);
      const VectorXd previous = full ? VectorXd(F.row(t).transpose()) : VectorXd(F(t, active).transpose());
      VectorXd coef = solve_half(problem, factor_basis_[k], previous, first, &objectives[k]);
      if (full) {
        F.row(t) = coef.transpose();
      } else {
        for (std::size_t a = 0; a < active.size(); ++a) F(t, active[a]) = coef[static_cast<Index>(a)];
      }
    });
    double total = 0.0;
    for (double v : objectives) total += v;
    return total;
  }

  VectorXd solve_half(const QrProblem& problem, std::vector<Index>& basis, const VectorXd& previous,
                      bool first, double* objective) const {
    if (!smoothing_) {
      QrFit fit = basis.empty() ? solve_qr(problem) : solve_qr_warm(problem, basis);
      basis = std::move(fit.basis);
      if (objective) *objective = fit.objective;
      return std::move(fit.coef);
    }
    VectorXd start;
    if (first) {
      QrFit fit = solve_qr(problem);
      start = std::move(fit.coef);
    } else {
      start = previous;
    }
    SqrFit fit = solve_sqr(problem, *smoothing_, start);
    if (objective) *objective = fit.objective;
    return std::move(fit.coef);
  }

  const MatrixXd& Y_;
  const MatrixXd Yt_;
  Quantile tau_;
  int r_;
  std::optional<SmoothingSpec> smoothing_;
  FactorOptions options_;
  std::vector<std::vector<Index>> loading_basis_;
  std::vector<std::vector<Index>> factor_basis_;
  std::vector<Index> active_;
};

QfmFit fit_alternating(const Eigen::Ref<const MatrixXd>& controls, Quantile tau, int r,
                       const std::optional<SmoothingSpec>& smoothing, const FactorOptions& options) {
  check_inputs(controls, r);
  if (smoothing) smoothing->validate();
  if (options.restarts < 1) throw InputError("at least one restart is required");
  if (options.max_iter < 1) throw InputError("max_iter must be positive");
  const MatrixXd Y = controls;

  std::optional<RestartOutcome> best;
  std::vector<double> best_failed_trace;
  std::string last_error;
  for (int restart = 0; restart < options.restarts; ++restart) {
    RestartOutcome progress;
    try {
      Alternation alt(Y, tau, r, smoothing, options);
      RestartOutcome outcome = alt.run(starting_factors(Y.cols(), r, options.seed, restart), progress);
      if (!best || outcome.objective < best->objective) best = std::move(outcome);
    } catch (const EstimationError& e) {
      last_error = e.what();
      if (!progress.trace.empty() &&
          (best_failed_trace.empty() || progress.trace.back() < best_failed_trace.back())) {
        best_failed_trace = progress.trace;
      }
    }
  }
  if (!best) {
    throw FactorFitError("all " + std::to_string(options.restarts) +
                             " restarts of the factor fit failed: " + last_error,
                         best_failed_trace);
  }

  QfmFit fit;
  fit.factors = std::move(best->factors);
  fit.loadings = std::move(best->loadings);
  fit.tau = tau;
  fit.r = r;
  fit.stage = smoothing ? Stage1::isqr : Stage1::iqr;
  fit.objective = best->objective;
  fit.iterations = best->iterations;
  fit.converged = best->converged;
  fit.trace = std::move(best->trace);
  return fit;
}

}  // namespace

QfmFit fit_iqr(const Eigen::Ref<const MatrixXd>& controls, Quantile tau, int r,
               const FactorOptions& options) {
  return fit_alternating(controls, tau, r, std::nullopt, options);
}

QfmFit fit_isqr(const Eigen::Ref<const MatrixXd>& controls, Quantile tau, int r,
                const SmoothingSpec& smoothing, const FactorOptions& options) {
  return fit_alternating(controls, tau, r, smoothing, options);
}

RankSelection select_rank(const Eigen::Ref<const MatrixXd>& controls, Quantile tau, int k,
                          const FactorOptions& options) {
  if (k < 1) throw InputError("probe rank k must be at least 1");
  const QfmFit fit = fit_iqr(controls, tau, k, options);
  const double N = static_cast<double>(controls.rows());
  const double T = static_cast<double>(controls.cols());
  RankSelection sel;
  sel.k = k;
  sel.sigma_diag = (fit.loadings.transpose() * fit.loadings).diagonal() / N;
  const double L = std::min(std::sqrt(N), std::sqrt(T));
  sel.threshold = sel.sigma_diag[0] * std::pow(L, -2.0 / 3.0);
  sel.r_hat = static_cast<int>((sel.sigma_diag.array() >= sel.threshold).count());
  return sel;
}

void write_fit_trace(std::ostream& out, const QfmFit& fit) {
  out << "iteration,objective\n";
  out.precision(17);
  for (std::size_t i = 0; i < fit.trace.size(); ++i) out << (i + 1) << ',' << fit.trace[i] << '\n';
}

}  // namespace qfmqtt

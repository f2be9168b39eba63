#include "qfmqtt/qr.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/kernel.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const VectorXd& no_weights() {
  static const VectorXd empty;
  return empty;
}

using MatRef = Eigen::Ref<const MatrixXd>;
using VecRef = Eigen::Ref<const VectorXd>;

constexpr double kDualTol = 1e-9;
constexpr double kTieTol = 1e-9;

double zero_tolerance(const VecRef& y) {
  return 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());
}

// ---------------------------------------------------------------------------
// Interior point (Frisch-Newton, Mehrotra predictor-corrector) on the dual
//   max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1.
// Returns the primal coefficients recovered from the dual multipliers.

double step_bound(const VectorXd& v, const VectorXd& dv) {
  double best = 1e20;
  for (Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) best = std::min(best, -v[i] / dv[i]);
  }
  return best;
}

VectorXd interior_point(const MatRef& X, const VecRef& y, double tau, int max_iter, int& iterations) {
  const Index n = X.rows();
  constexpr double kStep = 0.9995;

  VectorXd x = VectorXd::Constant(n, 1.0 - tau);
  VectorXd s = VectorXd::Ones(n) - x;
  const VectorXd b = X.transpose() * x;
  const VectorXd c = -y;

  VectorXd dual = X.colPivHouseholderQr().solve(c);
  VectorXd r = c - X * dual;
  for (Index i = 0; i < n; ++i) {
    if (r[i] == 0.0) r[i] = 0.001;
  }
  VectorXd z = r.cwiseMax(0.0);
  VectorXd w = z - r;
  double gap = c.dot(x) - dual.dot(b) + w.sum();

  iterations = 0;
  while (iterations < max_iter && gap > 1e-9 * (1.0 + std::abs(c.dot(x)))) {
    ++iterations;
    const VectorXd q = (z.cwiseQuotient(x) + w.cwiseQuotient(s)).cwiseInverse();
    r = z - w;
    const MatrixXd M = X.transpose() * q.asDiagonal() * X;
    const Eigen::LDLT<MatrixXd> ldlt(M);

    VectorXd dy = ldlt.solve(X.transpose() * q.cwiseProduct(r));
    VectorXd dx = q.cwiseProduct(X * dy - r);
    VectorXd ds = -dx;
    VectorXd dz = -z.cwiseProduct(dx.cwiseQuotient(x) + VectorXd::Ones(n));
    VectorXd dw = -w.cwiseProduct(ds.cwiseQuotient(s) + VectorXd::Ones(n));

    double fp = std::min(kStep * std::min(step_bound(x, dx), step_bound(s, ds)), 1.0);
    double fd = std::min(kStep * std::min(step_bound(w, dw), step_bound(z, dz)), 1.0);

    if (std::min(fp, fd) < 1.0) {
      double mu = z.dot(x) + w.dot(s);
      const double g = (z + fd * dz).dot(x + fp * dx) + (w + fd * dw).dot(s + fp * ds);
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));

      const VectorXd dxdz = dx.cwiseProduct(dz);
      const VectorXd dsdw = ds.cwiseProduct(dw);
      const VectorXd xinv = x.cwiseInverse();
      const VectorXd sinv = s.cwiseInverse();
      const VectorXd xi = mu * (xinv - sinv);

      dy = ldlt.solve(X.transpose() * q.cwiseProduct(r + dxdz - dsdw - xi));
      dx = q.cwiseProduct(X * dy + xi - r - dxdz + dsdw);
      ds = -dx;
      dz = mu * xinv - z - xinv.cwiseProduct(z).cwiseProduct(dx) - dxdz;
      dw = mu * sinv - w - sinv.cwiseProduct(w).cwiseProduct(ds) - dsdw;

      fp = std::min(kStep * std::min(step_bound(x, dx), step_bound(s, ds)), 1.0);
      fd = std::min(kStep * std::min(step_bound(w, dw), step_bound(z, dz)), 1.0);
    }

    x += fp * dx;
    s += fp * ds;
    dual += fd * dy;
    w += fd * dw;
    z += fd * dz;
    gap = c.dot(x) - dual.dot(b) + w.sum();
    if (!std::isfinite(gap)) break;
  }
  return -dual;
}

// min ||A s - b|| subject to lo <= s <= hi, by the bounded-variable
// least-squares active-set method (Stark and Parker). Free subproblems are
// solved in the minimum-norm sense since A is usually wide.
// Stops early once every |(A s - b)_j| <= target_j.
VectorXd box_least_squares(const MatrixXd& A, const VectorXd& b, double lo, double hi,
                           const VectorXd& target) {
  const Index m = A.cols();
  VectorXd s = VectorXd::Constant(m, lo);
  std::vector<char> free(static_cast<std::size_t>(m), 0);
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  for (int outer = 0; outer < 10 * static_cast<int>(m) + 10; ++outer) {
    const VectorXd resid = b - A * s;
    if ((resid.cwiseAbs().array() <= target.array()).all()) break;
    if (resid.cwiseAbs().maxCoeff() <= 1e-15 * scale) break;
    const VectorXd w = A.transpose() * resid;  // negative gradient
    Index enter = -1;
    double best = 1e-14 * scale;
    for (Index k = 0; k < m; ++k) {
      if (free[static_cast<std::size_t>(k)]) continue;
      const double gain = s[k] <= lo ? w[k] : -w[k];
      if (gain > best) {
        best = gain;
        enter = k;
      }
    }
    if (enter < 0) break;
    free[static_cast<std::size_t>(enter)] = 1;

    for (int inner = 0; inner <= static_cast<int>(m); ++inner) {
      std::vector<Index> F;
      for (Index k = 0; k < m; ++k) {
        if (free[static_cast<std::size_t>(k)]) F.push_back(k);
      }
      if (F.empty()) break;
      VectorXd rhs = b;
      for (Index k = 0; k < m; ++k) {
        if (!free[static_cast<std::size_t>(k)]) rhs -= A.col(k) * s[k];
      }
      const MatrixXd AF = A(Eigen::all, F);
      const VectorXd z = AF.completeOrthogonalDecomposition().solve(rhs);
      double alpha = 1.0;
      Index blocking = -1;
      double blocking_bound = lo;
      for (std::size_t q = 0; q < F.size(); ++q) {
        const Index k = F[q];
        if (z[static_cast<Index>(q)] < lo || z[static_cast<Index>(q)] > hi) {
          const double bound = z[static_cast<Index>(q)] < lo ? lo : hi;
          const double denom = z[static_cast<Index>(q)] - s[k];
          const double a = denom != 0.0 ? (bound - s[k]) / denom : 0.0;
          if (a < alpha) {
            alpha = std::max(a, 0.0);
            blocking = k;
            blocking_bound = bound;
          }
        }
      }
      for (std::size_t q = 0; q < F.size(); ++q) {
        const Index k = F[q];
        s[k] = std::clamp(s[k] + alpha * (z[static_cast<Index>(q)] - s[k]), lo, hi);
      }
      if (blocking < 0) break;
      s[blocking] = blocking_bound;
      for (Index k : F) {
        if (k == blocking || s[k] <= lo || s[k] >= hi) free[static_cast<std::size_t>(k)] = 0;
      }
    }
  }
  return s;
}

// Subgradient certificate on an unweighted (pre-scaled) problem. The search
// for interpolated-row signs stops once the gap is below `enough`.
double certificate(const MatRef& X, const VecRef& y, double tau, const VecRef& beta, double enough = 0.0) {
  const Index n = X.rows();
  const Index p = X.cols();
  const VectorXd r = y - X * beta;
  const double tol = zero_tolerance(y) * std::max(1.0, beta.cwiseAbs().sum());

  VectorXd fixed = VectorXd::Zero(p);
  VectorXd denom = VectorXd::Zero(p);
  std::vector<Index> zero_rows;
  for (Index t = 0; t < n; ++t) {
    denom += X.row(t).transpose().cwiseAbs();
    if (std::abs(r[t]) <= tol) {
      zero_rows.push_back(t);
    } else {
      fixed += X.row(t).transpose() * (r[t] > 0.0 ? tau : tau - 1.0);
    }
  }

  // Choose s in [tau - 1, tau] for interpolated rows to cancel `fixed`.
  VectorXd e = fixed;
  if (!zero_rows.empty()) {
    const MatrixXd A = X(zero_rows, Eigen::all).transpose();
    const VectorXd s = box_least_squares(A, -fixed, tau - 1.0, tau, 0.5 * enough * denom);
    e = A * s + fixed;
  }

  double gap = 0.0;
  for (Index j = 0; j < p; ++j) {
    if (denom[j] > 0.0) gap = std::max(gap, std::abs(e[j]) / denom[j]);
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Fallback for a stalled crossover: bounded-variable primal simplex on the dual
//   max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1,
// started from a = 1 - tau. Zero residuals are zero reduced costs here, so
// primal degeneracy does not stall it. Returns an optimal basis, or an empty
// one when the pivot cap is reached.

std::vector<Index> dual_simplex_basis(const MatRef& X, const VecRef& y, double tau, int max_pivots) {
  const Index n = X.rows();
  const Index p = X.cols();
  constexpr double kBoundTol = 1e-12;
  const double rtol = zero_tolerance(y);
  VectorXd a = VectorXd::Constant(n, 1.0 - tau);
  const VectorXd b = X.transpose() * a;

  // Purify: move along null vectors of the fractional rows, never lowering y'a,
  // until they are at most p linearly independent rows.
  std::vector<Index> frac;
  for (;;) {
    frac.clear();
    for (Index t = 0; t < n; ++t) {
      if (a[t] > 0.0 && a[t] < 1.0) frac.push_back(t);
    }
    const std::vector<Index> S(frac.begin(),
                               frac.begin() + std::min<std::ptrdiff_t>(std::ssize(frac), p + 1));
    if (S.empty()) break;
    Eigen::FullPivLU<MatrixXd> lu(X(S, Eigen::all).transpose());
    lu.setThreshold(1e-10);
    if (lu.dimensionOfKernel() == 0) break;
    VectorXd v = lu.kernel().col(0);
    if (y(S).dot(v) < 0.0) v = -v;
    const double vmin = 1e-12 * v.cwiseAbs().maxCoeff();
    double theta = std::numeric_limits<double>::infinity();
    Index block = -1;
    for (Index k = 0; k < v.size(); ++k) {
      const double room = v[k] > vmin ? (1.0 - a[S[k]]) / v[k] : v[k] < -vmin ? -a[S[k]] / v[k] : theta;
      if (room < theta) {
        theta = room;
        block = k;
      }
    }
    for (Index k = 0; k < v.size(); ++k) {
      double& ak = a[S[static_cast<std::size_t>(k)]];
      ak += theta * v[k];
      if (ak <= kBoundTol) ak = 0.0;
      if (ak >= 1.0 - kBoundTol) ak = 1.0;
    }
    a[S[static_cast<std::size_t>(block)]] = v[block] > 0.0 ? 1.0 : 0.0;
  }

  // Complete the fractional rows to a nonsingular basis.
  std::vector<Index> basis;
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  {
    std::vector<Index> order = frac;
    for (Index t = 0; t < n; ++t) {
      if (!(a[t] > 0.0 && a[t] < 1.0)) order.push_back(t);
    }
    MatrixXd Q(p, p);
    Index k = 0;
    for (Index t : order) {
      VectorXd v = X.row(t).transpose();
      const double norm = v.norm();
      if (norm == 0.0) continue;
      for (int pass = 0; pass < 2; ++pass) {
        if (k > 0) v -= Q.leftCols(k) * (Q.leftCols(k).transpose() * v);
      }
      if (v.norm() > 1e-8 * norm) {
        Q.col(k++) = v.normalized();
        basis.push_back(t);
        in[static_cast<std::size_t>(t)] = 1;
        if (k == p) break;
      }
    }
    if (k < p) throw RankDeficientError(static_cast<std::size_t>(p - 1), "quantile regression");
  }

  bool bland = false;
  for (int it = 0; it < max_pivots; ++it) {
    const MatrixXd XB = X(basis, Eigen::all);
    const Eigen::PartialPivLU<MatrixXd> lu(XB);
    const Eigen::PartialPivLU<MatrixXd> lut(XB.transpose());
    VectorXd rest = b;
    for (Index t = 0; t < n; ++t) {
      if (!in[static_cast<std::size_t>(t)] && a[t] != 0.0) rest -= a[t] * X.row(t).transpose();
    }
    const VectorXd aB = lut.solve(rest).cwiseMax(0.0).cwiseMin(1.0);
    for (Index k = 0; k < p; ++k) a[basis[static_cast<std::size_t>(k)]] = aB[k];

    const VectorXd beta = lu.solve(y(basis));
    const VectorXd r = y - X * beta;
    Index enter = -1;
    double best = rtol;
    for (Index t = 0; t < n; ++t) {
      if (in[static_cast<std::size_t>(t)]) continue;
      const double gain = a[t] == 0.0 ? r[t] : -r[t];
      if (gain > best) {
        best = gain;
        enter = t;
        if (bland) break;
      }
    }
    if (enter < 0) return basis;

    const double sigma = a[enter] == 0.0 ? 1.0 : -1.0;
    const VectorXd da = -sigma * lut.solve(X.row(enter).transpose());
    const double dmin = 1e-12 * std::max(1.0, da.cwiseAbs().maxCoeff());
    double theta = 1.0;
    Index leave = -1;
    for (Index k = 0; k < p; ++k) {
      const double ak = a[basis[static_cast<std::size_t>(k)]];
      double room;
      if (da[k] > dmin) room = (1.0 - ak) / da[k];
      else if (da[k] < -dmin) room = -ak / da[k];
      else continue;
      if (room < theta || (bland && room == theta && leave >= 0 &&
                           basis[static_cast<std::size_t>(k)] < basis[static_cast<std::size_t>(leave)])) {
        theta = room;
        leave = k;
      }
    }
    bland = theta <= 1e-14;
    for (Index k = 0; k < p; ++k) a[basis[static_cast<std::size_t>(k)]] += theta * da[k];
    if (leave < 0) {
      a[enter] = sigma > 0.0 ? 1.0 : 0.0;
      continue;
    }
    const Index out = basis[static_cast<std::size_t>(leave)];
    a[out] = da[leave] > 0.0 ? 1.0 : 0.0;
    a[enter] += sigma * theta;
    in[static_cast<std::size_t>(out)] = 0;
    in[static_cast<std::size_t>(enter)] = 1;
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Vertex pivoting. Any p linearly independent rows define a vertex
// beta = X_B^{-1} y_B of the piecewise-linear objective; optimality is read off
// the basis multipliers, and a violated multiplier gives a descent edge.

class VertexSolver {
public:
  VertexSolver(const MatRef& X, const VecRef& y, double tau)
      : X_(X), y_(y), tau_(tau), n_(X.rows()), p_(X.cols()), zero_tol_(zero_tolerance(y)),
        XB_(p_, p_), yB_(p_), g_(p_), d_(p_), row_(p_), w_(n_), c_(n_) {}

  enum class Move { pivot, swap, none };

  // Pick p independent rows, preferring those with the smallest |residual| at beta.
  bool basis_from_point(const VectorXd& beta, std::vector<Index>& basis) const {
    const VectorXd r = y_ - X_ * beta;
    std::vector<Index> order(static_cast<std::size_t>(n_));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(r[a]) < std::abs(r[b]); });
    for (double rel_tol : {1e-6, 1e-11}) {
      basis.clear();
      MatrixXd Q(p_, p_);
      Index k = 0;
      for (Index t : order) {
        VectorXd v = X_.row(t).transpose();
        const double norm = v.norm();
        if (norm == 0.0) continue;
        for (int pass = 0; pass < 2; ++pass) {
          if (k > 0) v -= Q.leftCols(k) * (Q.leftCols(k).transpose() * v);
        }
        const double rem = v.norm();
        if (rem > rel_tol * norm) {
          Q.col(k++) = v / rem;
          basis.push_back(t);
          if (k == p_) return true;
        }
      }
    }
    return false;
  }

  // Full recomputation from a basis. Returns false when the basis matrix is
  // numerically singular.
  bool load(std::vector<Index> basis) {
    for (Index k = 0; k < p_; ++k) {
      XB_.row(k) = X_.row(basis[static_cast<std::size_t>(k)]);
      yB_[k] = y_[basis[static_cast<std::size_t>(k)]];
    }
    lu_.compute(XB_);
    const VectorXd u = lu_.matrixLU().diagonal().cwiseAbs();
    if (!(u.minCoeff() > 1e-13 * u.maxCoeff())) return false;
    basis_ = std::move(basis);
    in_basis_.assign(static_cast<std::size_t>(n_), false);
    for (Index t : basis_) in_basis_[static_cast<std::size_t>(t)] = true;
    inv_ = lu_.inverse();
    beta_ = lu_.solve(yB_);
    resid_ = y_;
    resid_.noalias() -= X_ * beta_;
    for (Index t : basis_) resid_[t] = 0.0;
    since_refresh_ = 0;
    update_multipliers();
    return true;
  }

  double violation(Index j) const {
    return std::max(multipliers_[j] - tau_, (tau_ - 1.0) - multipliers_[j]);
  }

  double max_violation() const {
    double v = 0.0;
    for (Index j = 0; j < p_; ++j) v = std::max(v, violation(j));
    return v;
  }

  // One improving pivot, or a degenerate basis swap that leaves beta unchanged.
  Move improve() {
    std::vector<Index> candidates;
    for (Index j = 0; j < p_; ++j) {
      if (violation(j) > kDualTol) candidates.push_back(j);
    }
    std::sort(candidates.begin(), candidates.end(),
              [&](Index a, Index b) { return violation(a) > violation(b); });

    for (Index j : candidates) {
      const double sign = multipliers_[j] < tau_ - 1.0 ? 1.0 : -1.0;
      set_direction(j, sign);
      double slope = sign > 0.0 ? multipliers_[j] + 1.0 - tau_ : tau_ - multipliers_[j];
      slope += degenerate_slope();
      if (slope >= 0.0) continue;

      // Walk the breakpoints of the objective along the edge in order.
      breaks_.clear();
      for (Index t = 0; t < n_; ++t) {
        if (in_basis_[static_cast<std::size_t>(t)] || std::abs(resid_[t]) <= zero_tol_) continue;
        if (resid_[t] * c_[t] > 0.0) breaks_.push_back({resid_[t] / c_[t], std::abs(c_[t]), t});
      }
      const auto later = [](const Break& a, const Break& b) { return a.alpha > b.alpha; };
      std::make_heap(breaks_.begin(), breaks_.end(), later);
      while (!breaks_.empty()) {
        std::pop_heap(breaks_.begin(), breaks_.end(), later);
        const Break br = breaks_.back();
        breaks_.pop_back();
        slope += br.weight;
        if (slope >= 0.0) return pivot(j, br.row, br.alpha) ? Move::pivot : Move::none;
      }
      throw EstimationError("quantile regression objective is unbounded along a basis edge");
    }

    // Degenerate vertex: swap a zero-residual row into the basis without
    // moving, skipping bases already visited at this vertex.
    if (!candidates.empty() && !degenerate_.empty()) {
      visited_.insert(sorted_basis(basis_));
      for (Index j : candidates) {
        set_direction(j, 1.0);
        const double min_c = 1e-9 * std::max(1.0, c_.cwiseAbs().maxCoeff());
        std::vector<Index> rows;
        for (Index t : degenerate_) {
          if (std::abs(c_[t]) > min_c) rows.push_back(t);
        }
        std::sort(rows.begin(), rows.end(),
                  [&](Index a, Index b) { return std::abs(c_[a]) > std::abs(c_[b]); });
        for (Index t : rows) {
          std::vector<Index> next = basis_;
          next[static_cast<std::size_t>(j)] = t;
          if (visited_.contains(sorted_basis(next))) continue;
          return pivot(j, t, 0.0) ? Move::swap : Move::none;
        }
      }
    }
    return Move::none;
  }

  // One zero-cost move along the optimal face that lowers the first coefficient.
  bool tie_break_step() {
    for (Index j = 0; j < p_; ++j) {
      double sign = 0.0;
      if (std::abs(multipliers_[j] - tau_) <= kTieTol) sign = -1.0;
      else if (std::abs(multipliers_[j] - (tau_ - 1.0)) <= kTieTol) sign = 1.0;
      if (sign == 0.0) continue;
      if (!(sign * inv_(0, j) < -1e-12 * inv_.col(j).cwiseAbs().maxCoeff())) continue;
      set_direction(j, sign);
      if (degenerate_slope() > kTieTol) continue;

      double best_alpha = std::numeric_limits<double>::infinity();
      Index enter = -1;
      for (Index t = 0; t < n_; ++t) {
        if (in_basis_[static_cast<std::size_t>(t)] || std::abs(resid_[t]) <= zero_tol_) continue;
        if (resid_[t] * c_[t] > 0.0) {
          const double alpha = resid_[t] / c_[t];
          if (alpha < best_alpha) {
            best_alpha = alpha;
            enter = t;
          }
        }
      }
      if (enter < 0) continue;
      return pivot(j, enter, best_alpha);
    }
    return false;
  }

  // Pivot until dual feasible. Returns false when pivoting stalls, either with
  // no admissible move or after a run of degenerate swaps (possible cycling).
  bool pivot_to_optimum(int max_pivots, int& pivots) {
    int swaps = 0;
    visited_.clear();
    while (max_violation() > kDualTol && pivots < max_pivots) {
      const Move move = improve();
      if (move == Move::none) return false;
      if (move == Move::swap) {
        ++swaps;
      } else {
        swaps = 0;
        visited_.clear();
      }
      ++pivots;
      if (swaps > 2 * p_ + 2) return false;
    }
    return max_violation() <= kDualTol;
  }

  QrFit run(std::vector<Index> basis, int max_pivots, double tol_stat) {
    QrFit fit;
    if (!load(std::move(basis))) throw EstimationError("singular starting basis");
    int pivots = 0;
    pivot_to_optimum(max_pivots, pivots);
    if (pivots > 0 && !load(basis_)) throw EstimationError("singular basis");
    // Degenerate vertices can carry optimal multipliers on non-basic zero
    // residuals; optimality is then settled with the full certificate.
    auto gap = [&] { return certificate(X_, y_, tau_, beta_, tol_stat); };
    double final_gap = max_violation() <= kDualTol ? 0.0 : gap();
    if (final_gap > tol_stat) {
      std::vector<Index> fallback = dual_simplex_basis(X_, y_, tau_, max_pivots);
      if (!fallback.empty()) {
        if (!load(std::move(fallback))) throw EstimationError("singular basis");
        final_gap = max_violation() <= kDualTol ? 0.0 : gap();
      }
    }
    if (final_gap > tol_stat) {
      // Primal degeneracy (many zero residuals) can stall the pivots. A tiny
      // deterministic perturbation of y makes the vertices non-degenerate; a
      // basis optimal for the perturbed response is optimal for y itself.
      const VectorXd original = y_;
      const double scale = std::max(1.0, original.cwiseAbs().maxCoeff());
      for (double eps : {1e-11, 1e-9, 1e-7}) {
        for (Index t = 0; t < n_; ++t) y_[t] = original[t] + eps * scale * jitter(t);
        if (load(basis_)) pivot_to_optimum(max_pivots, pivots);
        y_ = original;
        if (!load(basis_)) throw EstimationError("singular basis after perturbation");
        final_gap = max_violation() <= kDualTol ? 0.0 : gap();
        if (final_gap <= tol_stat) break;
        pivot_to_optimum(max_pivots, pivots);
        if (!load(basis_)) throw EstimationError("singular basis after perturbation");
        final_gap = max_violation() <= kDualTol ? 0.0 : gap();
        if (final_gap <= tol_stat) break;
      }
    }
    if (final_gap > tol_stat) {
      throw ConvergenceError("quantile regression did not reach optimality", final_gap);
    }
    bool moved = false;
    for (int step = 0; step < max_pivots && tie_break_step(); ++step) {
      ++pivots;
      moved = true;
    }
    if (moved && !load(basis_)) throw EstimationError("singular basis");
    fit.coef = beta_;
    fit.basis = basis_;
    fit.pivots = pivots;
    return fit;
  }

private:
  struct Break {
    double alpha;
    double weight;
    Index row;
  };

  // d = sign * (column j of the basis inverse), c = X d.
  void set_direction(Index j, double sign) {
    d_ = sign * inv_.col(j);
    c_.noalias() = X_ * d_;
  }

  // Directional derivative contribution of currently-zero non-basic residuals.
  double degenerate_slope() const {
    double slope = 0.0;
    for (Index t : degenerate_) {
      slope += c_[t] > 0.0 ? (1.0 - tau_) * c_[t] : -tau_ * c_[t];
    }
    return slope;
  }

  double score_weight(Index t) const {
    if (in_basis_[static_cast<std::size_t>(t)] || std::abs(resid_[t]) <= zero_tol_) return 0.0;
    return resid_[t] > 0.0 ? tau_ : tau_ - 1.0;
  }

  // Recompute the signed-score sum g = X'w from scratch.
  void update_multipliers() {
    for (Index t = 0; t < n_; ++t) w_[t] = score_weight(t);
    g_.noalias() = X_.transpose() * w_;
    finish_multipliers();
  }

  // Update g for the rows whose score weight changed after a pivot.
  void refresh_multipliers() {
    degenerate_.clear();
    for (Index t = 0; t < n_; ++t) {
      const double w = score_weight(t);
      if (w != w_[t]) {
        g_ += (w - w_[t]) * X_.row(t).transpose();
        w_[t] = w;
      }
      if (w == 0.0 && !in_basis_[static_cast<std::size_t>(t)]) degenerate_.push_back(t);
    }
    multipliers_.noalias() = -(inv_.transpose() * g_);
  }

  void finish_multipliers() {
    degenerate_.clear();
    for (Index t = 0; t < n_; ++t) {
      if (w_[t] == 0.0 && !in_basis_[static_cast<std::size_t>(t)]) degenerate_.push_back(t);
    }
    multipliers_.noalias() = -(inv_.transpose() * g_);
  }

  // Replace basis position j by row `enter`, moving beta by alpha along d_.
  // Rank-one update of the inverse; full refresh every 64 pivots.
  bool pivot(Index j, Index enter, double alpha) {
    row_.noalias() = inv_.transpose() * X_.row(enter).transpose();  // (x_e' inv)'
    const double piv = row_[j];
    if (!(std::abs(piv) > 1e-10 * inv_.col(j).cwiseAbs().maxCoeff() *
                              X_.row(enter).cwiseAbs().maxCoeff())) {
      return false;
    }
    const Index leaving = basis_[static_cast<std::size_t>(j)];
    beta_ += alpha * d_;
    resid_ -= alpha * c_;
    resid_[enter] = 0.0;
    basis_[static_cast<std::size_t>(j)] = enter;
    in_basis_[static_cast<std::size_t>(leaving)] = false;
    in_basis_[static_cast<std::size_t>(enter)] = true;
    for (Index t : basis_) resid_[t] = 0.0;

    if (++since_refresh_ >= 64) return load(basis_);
    row_[j] -= 1.0;
    d_ = inv_.col(j) / piv;
    inv_.noalias() -= d_ * row_.transpose();
    refresh_multipliers();
    return true;
  }

  static std::vector<Index> sorted_basis(std::vector<Index> basis) {
    std::sort(basis.begin(), basis.end());
    return basis;
  }

  // Deterministic value in (-1, 1) per row.
  static double jitter(Index t) {
    std::uint64_t z = static_cast<std::uint64_t>(t) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
  }

  const MatRef& X_;
  VectorXd y_;
  double tau_;
  Index n_, p_;
  double zero_tol_;

  MatrixXd XB_;
  VectorXd yB_, g_, d_, row_, w_, c_;
  Eigen::PartialPivLU<MatrixXd> lu_;
  std::vector<Index> basis_;
  std::vector<bool> in_basis_;
  std::vector<Index> degenerate_;
  std::vector<Break> breaks_;
  MatrixXd inv_;
  VectorXd beta_, resid_, multipliers_;
  std::set<std::vector<Index>> visited_;
  int since_refresh_ = 0;
};

int pivot_cap(const QrOptions& options, Index n, Index p) {
  return options.max_pivots > 0 ? options.max_pivots : static_cast<int>(20 * (n + p));
}

void validate(const QrProblem& problem) {
  if (!problem.design().allFinite() || !problem.response().allFinite()) {
    throw InputError("quantile regression data contain non-finite values");
  }
  if (problem.weighted() && (problem.weights().minCoeff() < 0.0 || !problem.weights().allFinite())) {
    throw InputError("quantile regression weights must be finite and nonnegative");
  }
}

QrFit cold_unweighted(const MatRef& X, const VecRef& y, double tau, const QrOptions& options) {
  int iterations = 0;
  const VectorXd start = interior_point(X, y, tau, options.max_iter, iterations);
  VertexSolver solver(X, y, tau);
  std::vector<Index> basis;
  if (!start.allFinite() || !solver.basis_from_point(start, basis)) {
    require_full_column_rank(X, "quantile regression");
    if (!solver.basis_from_point(VectorXd::Zero(X.cols()), basis)) {
      throw RankDeficientError(static_cast<std::size_t>(X.cols() - 1), "quantile regression");
    }
  }
  QrFit fit = solver.run(std::move(basis), pivot_cap(options, X.rows(), X.cols()), options.tol_stat);
  fit.ipm_iterations = iterations;
  return fit;
}

template <typename Solve>
QrFit dispatch(const QrProblem& problem, Solve&& solve) {
  validate(problem);
  QrFit fit;
  if (problem.weighted()) {
    const MatrixXd Xw = problem.weights().asDiagonal() * problem.design();
    const VectorXd yw = problem.weights().cwiseProduct(problem.response());
    fit = solve(MatRef(Xw), VecRef(yw));
  } else {
    fit = solve(problem.design(), problem.response());
  }
  fit.objective = qr_objective(problem, fit.coef);
  return fit;
}

}  // namespace

QrProblem::QrProblem(Eigen::Ref<const MatrixXd> design, Eigen::Ref<const VectorXd> response,
                     Quantile tau)
    : QrProblem(design, response, tau, no_weights()) {}

QrProblem::QrProblem(Eigen::Ref<const MatrixXd> design, Eigen::Ref<const VectorXd> response,
                     Quantile tau, Eigen::Ref<const VectorXd> weights)
    : design_(design), response_(response), tau_(tau), weights_(weights) {
  if (design_.cols() < 1) throw InputError("quantile regression needs at least one regressor");
  if (design_.rows() < design_.cols()) {
    throw InputError("quantile regression needs at least as many observations as regressors");
  }
  if (response_.size() != design_.rows()) {
    throw InputError("quantile regression response length does not match design rows");
  }
  if (weights_.size() != 0 && weights_.size() != design_.rows()) {
    throw InputError("quantile regression weight length does not match design rows");
  }
}

void require_full_column_rank(const Eigen::Ref<const MatrixXd>& design, const char* context) {
  if (design.rows() < design.cols()) {
    throw RankDeficientError(static_cast<std::size_t>(design.rows()), context);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  const Index rank = qr.rank();
  if (rank < design.cols()) {
    // The first column pivoted past the numerical rank is the dependent one.
    throw RankDeficientError(static_cast<std::size_t>(qr.colsPermutation().indices()[rank]), context);
  }
}

double qr_objective(const QrProblem& problem, const Eigen::Ref<const VectorXd>& beta) {
  const VectorXd r = problem.response() - problem.design() * beta;
  double total = 0.0;
  for (Index t = 0; t < r.size(); ++t) {
    const double w = problem.weighted() ? problem.weights()[t] : 1.0;
    total += w * check_loss(r[t], problem.tau());
  }
  return total;
}

double stationarity_gap(const QrProblem& problem, const Eigen::Ref<const VectorXd>& beta) {
  if (problem.weighted()) {
    const MatrixXd Xw = problem.weights().asDiagonal() * problem.design();
    const VectorXd yw = problem.weights().cwiseProduct(problem.response());
    return certificate(Xw, yw, problem.tau(), beta);
  }
  return certificate(problem.design(), problem.response(), problem.tau(), beta);
}

QrFit solve_qr(const QrProblem& problem, const QrOptions& options) {
  return dispatch(problem, [&](const MatRef& X, const VecRef& y) {
    return cold_unweighted(X, y, problem.tau(), options);
  });
}

QrFit solve_qr_warm(const QrProblem& problem, std::span<const Index> basis, const QrOptions& options) {
  return dispatch(problem, [&](const MatRef& X, const VecRef& y) {
    if (static_cast<Index>(basis.size()) == X.cols()) {
      VertexSolver solver(X, y, problem.tau());
      std::vector<Index> start(basis.begin(), basis.end());
      const bool in_range = std::all_of(start.begin(), start.end(),
                                        [&](Index t) { return t >= 0 && t < X.rows(); });
      if (in_range) {
        try {
          return solver.run(std::move(start), pivot_cap(options, X.rows(), X.cols()), options.tol_stat);
        } catch (const EstimationError&) {
          // fall through to the cold path
        }
      }
    }
    return cold_unweighted(X, y, problem.tau(), options);
  });
}

Eigen::VectorXd fit_qr(const QrProblem& problem, const QrOptions& options) {
  return solve_qr(problem, options).coef;
}

}  // namespace qfmqtt

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "qfmqtt/kernel.hpp"
#include "qfmqtt/qr.hpp"

using namespace qfmqtt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double objective(const MatrixXd& X, const VectorXd& y, double tau, const VectorXd& b) {
  double total = 0.0;
  const VectorXd r = y - X * b;
  for (Eigen::Index t = 0; t < r.size(); ++t) total += check_loss(r[t], Quantile(tau));
  return total;
}

// Exhaustive oracle for intercept-only problems: the minimiser set always
// contains an order statistic; among minimising order statistics take the smallest.
double oracle_quantile(const VectorXd& y, double tau) {
  std::vector<double> sorted(y.data(), y.data() + y.size());
  std::sort(sorted.begin(), sorted.end());
  const MatrixXd ones = MatrixXd::Ones(y.size(), 1);
  double best = std::numeric_limits<double>::infinity(), arg = 0.0;
  for (double c : sorted) {
    const double obj = objective(ones, y, tau, VectorXd::Constant(1, c));
    if (std::isinf(best) || obj < best - 1e-12 * (1.0 + best)) {
      best = obj;
      arg = c;
    }
  }
  return arg;
}

// Brute-force vertex enumeration for p = 2.
double oracle_min_objective_p2(const MatrixXd& X, const VectorXd& y, double tau) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < X.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < X.rows(); ++b) {
      MatrixXd XB(2, 2);
      XB << X.row(a), X.row(b);
      if (std::abs(XB.determinant()) < 1e-12) continue;
      const VectorXd beta = XB.inverse() * VectorXd((VectorXd(2) << y[a], y[b]).finished());
      best = std::min(best, objective(X, y, tau, beta));
    }
  }
  return best;
}

MatrixXd random_design(std::mt19937_64& gen, int n, int p, bool intercept = true) {
  std::normal_distribution<double> z;
  MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = (intercept && j == 0) ? 1.0 : z(gen);
  return X;
}

}  // namespace

TEST_CASE("intercept-only medians") {
  const MatrixXd ones3 = MatrixXd::Ones(3, 1);
  const VectorXd y3 = vec({1, 2, 3});
  CHECK(fit_qr(QrProblem(ones3, y3, Quantile(0.5)))[0] == doctest::Approx(2.0));

  const MatrixXd ones4 = MatrixXd::Ones(4, 1);
  const VectorXd y4 = vec({1, 2, 3, 4});
  CHECK(fit_qr(QrProblem(ones4, y4, Quantile(0.5)))[0] == doctest::Approx(2.0));
  const VectorXd y4r = vec({4, 3, 1, 2});
  CHECK(fit_qr(QrProblem(ones4, y4r, Quantile(0.5)))[0] == doctest::Approx(2.0));
}

TEST_CASE("intercept-only fit equals the empirical quantile (exhaustive oracle, n <= 12)") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_real_distribution<double> t(0.02, 0.98);
  for (int rep = 0; rep < 400; ++rep) {
    const int n = size(gen);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = z(gen);
    // Every third case uses a tau with n * tau integral, where the minimiser is an interval.
    double tau = t(gen);
    if (rep % 3 == 0 && n > 1) tau = static_cast<double>(1 + rep % (n - 1)) / n;
    const MatrixXd ones = MatrixXd::Ones(n, 1);
    const double got = fit_qr(QrProblem(ones, y, Quantile(tau)))[0];
    CHECK_MESSAGE(got == doctest::Approx(oracle_quantile(y, tau)).epsilon(1e-12),
                  "n=" << n << " tau=" << tau);
  }
}

TEST_CASE("intercept-only fit with ties in the data") {
  const MatrixXd ones = MatrixXd::Ones(6, 1);
  const VectorXd y = vec({1, 1, 2, 2, 2, 5});
  for (double tau : {0.1, 0.3, 1.0 / 3.0, 0.5, 0.8, 0.9}) {
    CHECK(fit_qr(QrProblem(ones, y, Quantile(tau)))[0] == doctest::Approx(oracle_quantile(y, tau)));
  }
}

TEST_CASE("fit reaches the brute-force vertex minimum (p = 2)") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 60; ++rep) {
    const int n = 5 + rep % 20;
    const MatrixXd X = random_design(gen, n, 2);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = 1.0 + 0.5 * X(i, 1) + z(gen);
    const double tau = 0.1 + 0.8 * (rep % 9) / 8.0;
    const QrProblem problem(X, y, Quantile(tau));
    const QrFit fit = solve_qr(problem);
    CHECK(fit.objective == doctest::Approx(oracle_min_objective_p2(X, y, tau)).epsilon(1e-10));
  }
}

TEST_CASE("stationarity certificate holds on random problems") {
  std::mt19937_64 gen(99);
  std::student_t_distribution<double> heavy(2.0);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 30 + 17 * rep % 300;
    const int p = 1 + rep % 9;
    const MatrixXd X = random_design(gen, n, p, rep % 2 == 0);
    VectorXd y = X * VectorXd::LinSpaced(p, -1.0, 1.0);
    for (int i = 0; i < n; ++i) y[i] += heavy(gen);
    const double tau = 0.05 + 0.9 * ((rep * 7) % 10) / 9.0;
    const QrProblem problem(X, y, Quantile(tau));
    const VectorXd beta = fit_qr(problem);
    CHECK(stationarity_gap(problem, beta) <= 1e-6);
    // A perturbed point is not stationary.
    const VectorXd off = beta + VectorXd::Constant(p, 0.3);
    CHECK(stationarity_gap(problem, off) > 1e-3);
  }
}

TEST_CASE("positive scale equivariance") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z;
  const MatrixXd X = random_design(gen, 80, 3);
  VectorXd y(80);
  for (int i = 0; i < 80; ++i) y[i] = z(gen);
  for (double c : {0.01, 3.0, 250.0}) {
    const VectorXd scaled = c * y;
    const VectorXd b1 = fit_qr(QrProblem(X, y, Quantile(0.3)));
    const VectorXd b2 = fit_qr(QrProblem(X, scaled, Quantile(0.3)));
    CHECK((b2 - c * b1).cwiseAbs().maxCoeff() <= 1e-9 * c);
  }
}

TEST_CASE("regression equivariance: y + X gamma shifts the fit by gamma") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd X = random_design(gen, 120, 4);
    VectorXd y(120), gamma(4);
    for (int i = 0; i < 120; ++i) y[i] = z(gen);
    for (int j = 0; j < 4; ++j) gamma[j] = 3.0 * z(gen);
    const double tau = 0.1 + 0.2 * (rep % 5);
    const VectorXd shifted = y + X * gamma;
    const VectorXd b1 = fit_qr(QrProblem(X, y, Quantile(tau)));
    const VectorXd b2 = fit_qr(QrProblem(X, shifted, Quantile(tau)));
    CHECK((b2 - b1 - gamma).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("exact fit is recovered at every quantile") {
  std::mt19937_64 gen(8);
  const MatrixXd X = random_design(gen, 50, 3, false);
  const VectorXd truth = vec({0.7, -1.2, 2.5});
  const VectorXd y = X * truth;
  for (double tau : {0.05, 0.25, 0.5, 0.9}) {
    const VectorXd b = fit_qr(QrProblem(X, y, Quantile(tau)));
    CHECK((b - truth).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("integer weights equal replicated observations") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> z;
  const MatrixXd X = random_design(gen, 25, 2);
  VectorXd y(25), w(25);
  for (int i = 0; i < 25; ++i) {
    y[i] = z(gen);
    w[i] = 1 + i % 3;
  }
  const int total = static_cast<int>(w.sum());
  MatrixXd Xr(total, 2);
  VectorXd yr(total);
  int row = 0;
  for (int i = 0; i < 25; ++i) {
    for (int k = 0; k < w[i]; ++k) {
      Xr.row(row) = X.row(i);
      yr[row++] = y[i];
    }
  }
  const QrFit weighted = solve_qr(QrProblem(X, y, Quantile(0.35), w));
  const QrFit replicated = solve_qr(QrProblem(Xr, yr, Quantile(0.35)));
  CHECK(weighted.objective == doctest::Approx(replicated.objective).epsilon(1e-12));
}

TEST_CASE("warm start from a previous basis reaches the same optimum") {
  std::mt19937_64 gen(21);
  std::normal_distribution<double> z;
  const MatrixXd X = random_design(gen, 200, 5);
  VectorXd y(200);
  for (int i = 0; i < 200; ++i) y[i] = X.row(i).sum() + z(gen);
  const QrProblem problem(X, y, Quantile(0.4));
  const QrFit cold = solve_qr(problem);

  VectorXd y2 = y;
  for (int i = 0; i < 200; ++i) y2[i] += 0.05 * z(gen);
  const QrProblem nearby(X, y2, Quantile(0.4));
  const QrFit warm = solve_qr_warm(nearby, cold.basis);
  const QrFit fresh = solve_qr(nearby);
  CHECK(warm.objective == doctest::Approx(fresh.objective).epsilon(1e-10));
  CHECK(stationarity_gap(nearby, warm.coef) <= 1e-6);

  // Unusable hints fall back to the cold path.
  const std::vector<Eigen::Index> bad{0, 0, 0, 0, 0};
  CHECK(solve_qr_warm(problem, bad).objective == doctest::Approx(cold.objective));
}

TEST_CASE("rank-deficient design is rejected with the offending column") {
  MatrixXd X(6, 3);
  X << 1, 2, 0, 1, 3, 0, 1, 4, 0, 1, 5, 0, 1, 6, 0, 1, 7, 0;
  const VectorXd y = VectorXd::LinSpaced(6, 0, 5);
  try {
    fit_qr(QrProblem(X, y, Quantile(0.5)));
    FAIL("expected RankDeficientError");
  } catch (const RankDeficientError& e) {
    CHECK(e.column() == 2);
  }
  CHECK_THROWS_AS(require_full_column_rank(X, "test"), RankDeficientError);
}

TEST_CASE("malformed problems are rejected") {
  const MatrixXd X = MatrixXd::Ones(2, 3);
  const VectorXd y = VectorXd::Ones(2);
  CHECK_THROWS_AS(QrProblem(X, y, Quantile(0.5)), InputError);
  const MatrixXd X2 = MatrixXd::Ones(3, 1);
  CHECK_THROWS_AS(QrProblem(X2, y, Quantile(0.5)), InputError);
  VectorXd bad = VectorXd::Ones(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(fit_qr(QrProblem(X2, bad, Quantile(0.5))), InputError);
}

TEST_CASE("degenerate problems with many interpolated rows reach a certified optimum") {
  std::mt19937_64 gen(77);
  std::normal_distribution<double> norm;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 40, p = 4;
    MatrixXd X(n, p);
    VectorXd beta0(p), y(n);
    for (int j = 0; j < p; ++j) beta0[j] = norm(gen);
    for (int t = 0; t < n; ++t) {
      for (int j = 0; j < p; ++j) X(t, j) = norm(gen);
      // Every third row lies exactly on the plane x' beta0.
      y[t] = X.row(t).dot(beta0) + (t % 3 == 0 ? 0.0 : norm(gen));
    }
    const QrProblem problem(X, y, Quantile(0.5));
    const QrFit fit = solve_qr(problem);
    CHECK(stationarity_gap(problem, fit.coef) <= 1e-6);
    CHECK(fit.objective <= qr_objective(problem, beta0) + 1e-9);
    const QrFit warm = solve_qr_warm(problem, std::vector<Eigen::Index>{0, 3, 6, 9});
    CHECK(warm.objective == doctest::Approx(fit.objective).epsilon(1e-12));
  }
}

TEST_CASE("rows within round-off of the optimal plane reach a certified optimum") {
  struct Design {
    int n, p;
    double offset;
  };
  for (const Design d : {Design{60, 2, 3e-11}, Design{100, 3, 1e-10}, Design{100, 3, 1e-9}}) {
    for (int rep = 0; rep < 100; ++rep) {
      std::mt19937_64 gen(1000 + rep);
      std::normal_distribution<double> norm;
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      MatrixXd X(d.n, d.p);
      VectorXd beta0(d.p), y(d.n);
      for (int j = 0; j < d.p; ++j) beta0[j] = norm(gen);
      for (int t = 0; t < d.n; ++t) {
        for (int j = 0; j < d.p; ++j) X(t, j) = norm(gen);
        y[t] = X.row(t).dot(beta0) + (t % 2 == 0 ? d.offset * unif(gen) : norm(gen));
      }
      for (double tau : {0.25, 0.5, 0.75}) {
        const QrProblem problem(X, y, Quantile(tau));
        QrFit fit;
        REQUIRE_NOTHROW(fit = solve_qr(problem));
        CHECK_MESSAGE(stationarity_gap(problem, fit.coef) <= 1e-6, "n=" << d.n << " rep=" << rep);
      }
    }
  }
}

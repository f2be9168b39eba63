#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/inference.hpp"
#include "qfmqtt/qtt.hpp"

using namespace qfmqtt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd normal_draws(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> norm;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = norm(gen);
  return v;
}

VectorXd step(int T0, int T1) {
  VectorXd d = VectorXd::Zero(T0 + T1);
  d.tail(T1).setOnes();
  return d;
}

// P(k-th order statistic of an iid resample of n points <= j-th smallest point).
double order_stat_cdf(int n, int k, int j) {
  const double p = static_cast<double>(j) / n;
  double total = 0.0;
  for (int m = k; m <= n; ++m) {
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0) +
                      (m > 0 ? m * std::log(p) : 0.0) + (n - m > 0 ? (n - m) * std::log1p(-p) : 0.0));
  }
  return std::min(total, 1.0);
}

// Exact variance of the bootstrap k-th order statistic of `x`.
double bootstrap_order_stat_variance(VectorXd x, int k) {
  std::sort(x.data(), x.data() + x.size());
  const int n = static_cast<int>(x.size());
  double mean = 0.0, second = 0.0, prev = 0.0;
  for (int j = 1; j <= n; ++j) {
    const double cdf = j == n ? 1.0 : order_stat_cdf(n, k, j);
    const double mass = cdf - prev;
    prev = cdf;
    mean += mass * x[j - 1];
    second += mass * x[j - 1] * x[j - 1];
  }
  return second - mean * mean;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("block plan arithmetic") {
  const BlockPlan plan = make_block_plan(40, 28);
  CHECK(plan.pre_block == 3);
  CHECK(plan.pre_draws == 13);
  CHECK(plan.post_block == 3);
  CHECK(plan.post_draws == 9);
  CHECK(plan.resampled_length() == 66);

  const BlockPlan tiny = make_block_plan(1, 1);
  CHECK(tiny.pre_block == 1);
  CHECK(tiny.pre_draws == 1);

  CHECK(make_block_plan(27, 64).pre_block == 3);
  CHECK(make_block_plan(27, 64).post_block == 4);
  CHECK(make_block_plan(26, 63).pre_block == 2);
  CHECK(make_block_plan(26, 63).post_block == 3);

  const BlockPlan over = make_block_plan(40, 28, 5, 28);
  CHECK(over.pre_draws == 8);
  CHECK(over.post_draws == 1);
  CHECK_THROWS_AS(make_block_plan(40, 28, 0), InputError);
  CHECK_THROWS_AS(make_block_plan(40, 28, std::nullopt, 29), InputError);
  CHECK_THROWS_AS(make_block_plan(0, 28), InputError);
}

TEST_CASE("moving blocks come from the overlapping window set") {
  Philox rng(1, 2);
  std::set<int> starts;
  for (int rep = 0; rep < 500; ++rep) {
    const std::vector<int> rows = draw_block_indices(5, 2, 2, rng);
    REQUIRE(rows.size() == 4);
    for (std::size_t k = 0; k < rows.size(); k += 2) {
      CHECK(rows[k + 1] == rows[k] + 1);
      CHECK(rows[k] >= 0);
      CHECK(rows[k] <= 3);
      starts.insert(rows[k]);
    }
  }
  CHECK(starts == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("block size equal to the series length returns the series") {
  MatrixXd series(6, 2);
  series << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  Philox rng(3, 0);
  CHECK(draw_block_sample(series, 6, 1, rng) == series);
}

TEST_CASE("block size one is iid resampling") {
  Philox rng(4, 0);
  std::vector<int> counts(10, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    for (int t : draw_block_indices(10, 1, 10, rng)) ++counts[static_cast<std::size_t>(t)];
  }
  for (int c : counts) CHECK(std::abs(c - 2000) < 250);
}

TEST_CASE("replicate rows never cross the treatment boundary") {
  const BlockPlan plan = make_block_plan(40, 28);
  for (std::uint64_t b = 0; b < 300; ++b) {
    Philox rng = make_rng(9, {b});
    const std::vector<int> rows = bootstrap_rows(plan, rng);
    REQUIRE(static_cast<int>(rows.size()) == plan.resampled_length());
    const int pre = plan.pre_draws * plan.pre_block;
    for (int k = 0; k < pre; ++k) CHECK(rows[static_cast<std::size_t>(k)] < 40);
    for (std::size_t k = static_cast<std::size_t>(pre); k < rows.size(); ++k) {
      CHECK(rows[k] >= 40);
      CHECK(rows[k] < 68);
    }
  }
}

TEST_CASE("bootstrap is deterministic and the interval is delta_hat +- 1.96 sd") {
  const int T0 = 60, T1 = 40;
  MatrixXd F(T0 + T1, 2);
  F << VectorXd::Ones(T0 + T1), normal_draws(T0 + T1, 1);
  const VectorXd d = step(T0, T1);
  const VectorXd y = F * Eigen::Vector2d(0.3, 1.0) + 0.5 * d + normal_draws(T0 + T1, 2);
  BootstrapOptions opts;
  opts.B = 200;
  opts.seed = 17;
  const BootstrapResult a = bootstrap_qtt(y, d, F, Quantile(0.5), opts);
  const BootstrapResult b = bootstrap_qtt(y, d, F, Quantile(0.5), opts);
  CHECK(a.replicates == b.replicates);
  CHECK(a.sd == b.sd);
  CHECK(a.ci_lower == b.ci_lower);
  CHECK(a.replicates.size() == 200);
  CHECK(a.dropped == 0);
  CHECK(a.sd > 0.0);
  CHECK(a.delta_hat == estimate_qtt(y, d, F, Quantile(0.5)).delta);
  CHECK(a.ci_upper - a.ci_lower == doctest::Approx(2 * 1.96 * a.sd).epsilon(1e-12));
  CHECK((a.ci_upper + a.ci_lower) / 2 == doctest::Approx(a.delta_hat).epsilon(1e-12));
  CHECK(a.percentile_lower <= a.percentile_upper);
  CHECK(a.warnings.empty());

  opts.jobs = 3;
  CHECK(bootstrap_qtt(y, d, F, Quantile(0.5), opts).replicates == a.replicates);
  opts.seed = 18;
  CHECK_FALSE(bootstrap_qtt(y, d, F, Quantile(0.5), opts).replicates == a.replicates);
}

TEST_CASE("block size one matches an independent iid bootstrap (KS < 0.05)") {
  const int T0 = 41, T1 = 41;
  const VectorXd y = normal_draws(T0 + T1, 5);
  const MatrixXd F = VectorXd::Ones(T0 + T1);
  BootstrapOptions opts;
  opts.B = 5000;
  opts.seed = 2;
  opts.pre_block = 1;
  opts.post_block = 1;
  const BootstrapResult res = bootstrap_qtt(y, step(T0, T1), F, Quantile(0.5), opts);

  // Median regression on [1 | d]: delta* is the difference of the 21st order
  // statistics of the post and pre resamples.
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> pick(0, T0 - 1);
  std::vector<double> oracle;
  for (int b = 0; b < 5000; ++b) {
    std::vector<double> pre, post;
    for (int k = 0; k < T0; ++k) pre.push_back(y[pick(gen)]);
    for (int k = 0; k < T1; ++k) post.push_back(y[T0 + pick(gen)]);
    std::nth_element(pre.begin(), pre.begin() + 20, pre.end());
    std::nth_element(post.begin(), post.begin() + 20, post.end());
    oracle.push_back(post[20] - pre[20]);
  }
  std::vector<double> reps(res.replicates.data(), res.replicates.data() + res.replicates.size());
  CHECK(ks_distance(reps, oracle) < 0.05);
}

TEST_CASE("bootstrap sd matches the exact order-statistic sd") {
  const int T0 = 41, T1 = 41;
  const VectorXd y = normal_draws(T0 + T1, 6);
  const MatrixXd F = VectorXd::Ones(T0 + T1);
  BootstrapOptions opts;
  opts.B = 2000;
  opts.seed = 3;
  opts.pre_block = 1;
  opts.post_block = 1;
  for (double tau : {0.5, 0.25}) {
    const BootstrapResult res = bootstrap_qtt(y, step(T0, T1), F, Quantile(tau), opts);
    const int k = static_cast<int>(std::ceil(tau * T0));
    const double exact = std::sqrt(bootstrap_order_stat_variance(y.head(T0), k) +
                                   bootstrap_order_stat_variance(y.tail(T1), k));
    CHECK(res.sd == doctest::Approx(exact).epsilon(0.15));
  }
}

TEST_CASE("two replicates run with a warning") {
  const int T0 = 20, T1 = 20;
  MatrixXd F(T0 + T1, 1);
  F.col(0) = normal_draws(T0 + T1, 7);
  const VectorXd y = normal_draws(T0 + T1, 8);
  BootstrapOptions opts;
  opts.B = 2;
  const BootstrapResult res = bootstrap_qtt(y, step(T0, T1), F, Quantile(0.5), opts);
  CHECK(res.replicates.size() == 2);
  CHECK(res.B == 2);
  CHECK_FALSE(res.warnings.empty());
  opts.B = 0;
  CHECK_THROWS_AS(bootstrap_qtt(y, step(T0, T1), F, Quantile(0.5), opts), InputError);
}

TEST_CASE("too many failed replicates abort the run") {
  // Design [1 | x | d] on two pre and two post rows is singular whenever both
  // segments resample a single row, which happens with probability 1/4.
  const int T0 = 2, T1 = 2;
  MatrixXd F(4, 2);
  F << 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0;
  const VectorXd y(Eigen::Vector4d(0.1, 0.5, 0.2, 0.9));
  BootstrapOptions opts;
  opts.B = 200;
  opts.pre_block = 1;
  opts.post_block = 1;
  CHECK_THROWS_AS(bootstrap_qtt(y, step(T0, T1), F, Quantile(0.5), opts), EstimationError);
}

#include "qfmqtt/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/parallel.hpp"
#include "qfmqtt/qtt.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

int integer_cube_root(int n) {
  int b = 1;
  while ((b + 1) * (b + 1) * (b + 1) <= n) ++b;
  return b;
}

int checked_block(int length, std::optional<int> override_size, const char* segment) {
  if (!override_size) return integer_cube_root(length);
  if (*override_size < 1 || *override_size > length) {
    throw InputError(std::string(segment) + " block size must lie in [1, " + std::to_string(length) + "]");
  }
  return *override_size;
}

// Linear interpolation between order statistics.
double sample_quantile(std::vector<double> sorted, double p) {
  std::sort(sorted.begin(), sorted.end());
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

BlockPlan make_block_plan(int T0, int T1, std::optional<int> pre_block, std::optional<int> post_block) {
  if (T0 < 1 || T1 < 1) throw InputError("both the pre- and post-treatment segments must be non-empty");
  BlockPlan plan;
  plan.T0 = T0;
  plan.T1 = T1;
  plan.pre_block = checked_block(T0, pre_block, "pre-treatment");
  plan.post_block = checked_block(T1, post_block, "post-treatment");
  plan.pre_draws = T0 / plan.pre_block;
  plan.post_draws = T1 / plan.post_block;
  return plan;
}

std::vector<int> draw_block_indices(int length, int block, int draws, Philox& rng) {
  if (block < 1 || block > length) throw InputError("block size must lie in [1, series length]");
  std::uniform_int_distribution<int> start(0, length - block);
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(block) * static_cast<std::size_t>(std::max(draws, 0)));
  for (int k = 0; k < draws; ++k) {
    const int s = start(rng);
    for (int j = 0; j < block; ++j) rows.push_back(s + j);
  }
  return rows;
}

MatrixXd draw_block_sample(const Eigen::Ref<const MatrixXd>& series, int block, int draws, Philox& rng) {
  const std::vector<int> rows = draw_block_indices(static_cast<int>(series.rows()), block, draws, rng);
  return series(rows, Eigen::all);
}

std::vector<int> bootstrap_rows(const BlockPlan& plan, Philox& rng) {
  std::vector<int> rows = draw_block_indices(plan.T0, plan.pre_block, plan.pre_draws, rng);
  const std::vector<int> post = draw_block_indices(plan.T1, plan.post_block, plan.post_draws, rng);
  for (int t : post) rows.push_back(plan.T0 + t);
  return rows;
}

BootstrapResult bootstrap_qtt(const Eigen::Ref<const VectorXd>& y1, const Eigen::Ref<const VectorXd>& d1,
                              const Eigen::Ref<const MatrixXd>& F_tilde, Quantile tau,
                              const BootstrapOptions& options) {
  if (options.B < 1) throw InputError("bootstrap needs at least one replicate");
  const QttEstimate point = estimate_qtt(y1, d1, F_tilde, tau);
  const Index T = y1.size();
  const int T0 = static_cast<int>(T - static_cast<Index>(d1.sum()));
  const BlockPlan plan = make_block_plan(T0, static_cast<int>(T) - T0, options.pre_block, options.post_block);

  MatrixXd data(T, F_tilde.cols() + 1);
  data << y1, F_tilde;
  const int pre_rows = plan.pre_draws * plan.pre_block;
  VectorXd d_star = VectorXd::Zero(plan.resampled_length());
  d_star.tail(plan.resampled_length() - pre_rows).setOnes();

  std::vector<double> slots(static_cast<std::size_t>(options.B), std::nan(""));
  parallel_for(static_cast<std::size_t>(options.B), options.jobs, [&](std::size_t b) {
    Philox rng = make_rng(options.seed, {static_cast<std::uint64_t>(b)});
    const std::vector<int> rows = bootstrap_rows(plan, rng);
    const MatrixXd sample = data(rows, Eigen::all);
    try {
      const QttEstimate rep = estimate_qtt(sample.col(0), d_star, sample.rightCols(F_tilde.cols()), tau);
      if (std::isfinite(rep.delta)) slots[b] = rep.delta;
    } catch (const EstimationError&) {
    }
  });

  BootstrapResult out;
  out.tau = tau;
  out.delta_hat = point.delta;
  out.B = options.B;
  out.seed = options.seed;
  out.plan = plan;
  std::vector<double> kept;
  for (double v : slots) {
    if (std::isfinite(v)) kept.push_back(v);
  }
  out.dropped = options.B - static_cast<int>(kept.size());
  if (static_cast<double>(out.dropped) > options.max_dropped * options.B || kept.empty()) {
    throw EstimationError("bootstrap failed: " + std::to_string(out.dropped) + " of " + std::to_string(options.B) +
                          " replicates could not be estimated");
  }
  out.replicates = Eigen::Map<const VectorXd>(kept.data(), static_cast<Index>(kept.size()));
  if (kept.size() > 1) {
    const double mean = out.replicates.mean();
    out.sd = std::sqrt((out.replicates.array() - mean).square().sum() / static_cast<double>(kept.size() - 1));
  }
  out.ci_lower = out.delta_hat - 1.96 * out.sd;
  out.ci_upper = out.delta_hat + 1.96 * out.sd;
  out.percentile_lower = sample_quantile(kept, 0.025);
  out.percentile_upper = sample_quantile(kept, 0.975);
  if (options.B < 100) {
    out.warnings.push_back("only " + std::to_string(options.B) + " bootstrap replicates; standard errors are unreliable");
  }
  if (out.dropped > 0) out.warnings.push_back(std::to_string(out.dropped) + " bootstrap replicates failed and were dropped");
  return out;
}

}  // namespace qfmqtt

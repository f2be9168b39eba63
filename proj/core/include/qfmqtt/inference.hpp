#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qfmqtt/quantile.hpp"
#include "qfmqtt/rng.hpp"

namespace qfmqtt {

/// Moving-block sizes and draw counts for the pre (0) and post (1) segments.
struct BlockPlan {
  int T0 = 0;
  int T1 = 0;
  int pre_block = 1;
  int post_block = 1;
  int pre_draws = 0;
  int post_draws = 0;

  /// Rows in a resampled series: pre_draws * pre_block + post_draws * post_block.
  int resampled_length() const noexcept { return pre_draws * pre_block + post_draws * post_block; }
};

/// Default block size floor(T_d^(1/3)); draws floor(T_d / block). Overrides
/// must lie in [1, T_d].
BlockPlan make_block_plan(int T0, int T1, std::optional<int> pre_block = std::nullopt,
                          std::optional<int> post_block = std::nullopt);

/// Start offsets of `draws` blocks drawn uniformly from the length - block + 1
/// overlapping windows of a series, expanded to row indices in [0, length).
std::vector<int> draw_block_indices(int length, int block, int draws, Philox& rng);

/// Rows of `series` selected by draw_block_indices.
Eigen::MatrixXd draw_block_sample(const Eigen::Ref<const Eigen::MatrixXd>& series, int block, int draws,
                                  Philox& rng);

/// Row indices of one bootstrap replicate: pre rows from [0, T0) followed by
/// post rows from [T0, T0 + T1), each segment resampled independently.
std::vector<int> bootstrap_rows(const BlockPlan& plan, Philox& rng);

struct BootstrapOptions {
  int B = 300;
  std::uint64_t seed = 0;
  /// Block-size overrides; cube-root defaults when empty.
  std::optional<int> pre_block;
  std::optional<int> post_block;
  unsigned jobs = 1;
  /// Largest tolerated fraction of failed replicates.
  double max_dropped = 0.05;
};

struct BootstrapResult {
  double tau = 0.5;
  double delta_hat = 0.0;
  /// Successful replicates in replicate-index order.
  Eigen::VectorXd replicates;
  double sd = 0.0;
  /// delta_hat -/+ 1.96 sd.
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  /// 2.5% and 97.5% replicate quantiles; reported but not the canonical interval.
  double percentile_lower = 0.0;
  double percentile_upper = 0.0;
  int B = 0;
  int dropped = 0;
  std::uint64_t seed = 0;
  BlockPlan plan;
  std::vector<std::string> warnings;
};

/// Blockwise bootstrap of the second stage holding the first-stage factors
/// fixed. Replicate b uses RNG stream (seed, b). Throws EstimationError when
/// more than max_dropped of the replicates fail.
BootstrapResult bootstrap_qtt(const Eigen::Ref<const Eigen::VectorXd>& y1, const Eigen::Ref<const Eigen::VectorXd>& d1,
                              const Eigen::Ref<const Eigen::MatrixXd>& F_tilde, Quantile tau,
                              const BootstrapOptions& options = {});

}  // namespace qfmqtt

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qfmqtt/panel.hpp"
#include "qfmqtt/quantile.hpp"

namespace qfmqtt {

enum class DgpFamily { baseline, heavy_tail, dependent, quantile_variant };

std::string_view to_string(DgpFamily family);
/// Accepts the names printed by to_string plus "heavy-tail", "quantile-variant".
DgpFamily parse_dgp_family(std::string_view text);

struct DgpSpec {
  DgpFamily family = DgpFamily::baseline;
  /// Control units; the simulated panel has N + 1 units with unit 1 treated.
  int N = 100;
  int T = 200;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;

  /// Dependent errors: u_it = ar u_i,t-1 + e_it + neighbor_weight * sum_{0<|j-i|<=J} e_jt,
  /// neighbours wrap around the unit index, e ~ t(innovation_df).
  int J = 3;
  double ar = 0.2;
  double neighbor_weight = 0.2;
  double innovation_df = 3.0;

  /// Autoregressive factors start from their stationary law and run this many
  /// discarded periods first.
  int burn_in = 100;

  void validate() const;
};

/// Ground truth attached to a simulated panel.
class DgpTruth {
public:
  DgpTruth() = default;
  DgpTruth(const DgpSpec& spec, Eigen::MatrixXd factors);

  /// True quantile treatment effect.
  double delta0(Quantile tau) const;
  /// Number of factors in the tau-th conditional quantile.
  int r0(Quantile tau) const;
  /// Regressors of the infeasible Oracle estimator (T x K).
  const Eigen::MatrixXd& factors() const noexcept { return factors_; }
  DgpFamily family() const noexcept { return spec_.family; }

private:
  DgpSpec spec_;
  Eigen::MatrixXd factors_;
  std::shared_ptr<const std::vector<double>> error_draws_;
};

struct SimulatedPanel {
  PanelData panel;
  DgpTruth truth;
};

/// Treatment starts at T0 = floor(T/2): periods t > T/2 are treated.
SimulatedPanel generate(const DgpSpec& spec);

}  // namespace qfmqtt

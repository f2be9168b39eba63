#include <benchmark/benchmark.h>

#include "qfmqtt/dgp.hpp"
#include "qfmqtt/inference.hpp"
#include "qfmqtt/qfm.hpp"
#include "qfmqtt/qtt.hpp"

namespace {

using namespace qfmqtt;

SimulatedPanel panel(int N, int T) {
  DgpSpec spec;
  spec.N = N;
  spec.T = T;
  spec.seed = 3;
  return generate(spec);
}

void BM_FitIqr(benchmark::State& state) {
  const Eigen::MatrixXd controls =
      split_control_treated(panel(static_cast<int>(state.range(0)), static_cast<int>(state.range(1))).panel).controls;
  FactorOptions fo;
  fo.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fit_iqr(controls, Quantile(0.25), 3, fo));
}
BENCHMARK(BM_FitIqr)->Args({50, 100})->Args({100, 200})->Unit(benchmark::kMillisecond);

void BM_FitIsqr(benchmark::State& state) {
  const Eigen::MatrixXd controls = split_control_treated(panel(50, 100).panel).controls;
  FactorOptions fo;
  fo.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fit_isqr(controls, Quantile(0.25), 3, SmoothingSpec{0.5}, fo));
}
BENCHMARK(BM_FitIsqr)->Unit(benchmark::kMillisecond);

void BM_SelectRank(benchmark::State& state) {
  const Eigen::MatrixXd controls = split_control_treated(panel(100, 200).panel).controls;
  for (auto _ : state) benchmark::DoNotOptimize(select_rank(controls, Quantile(0.5), 8));
}
BENCHMARK(BM_SelectRank)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_Bootstrap(benchmark::State& state) {
  const SimulatedPanel sim = panel(100, 200);
  const SplitPanel split = split_control_treated(sim.panel);
  const Eigen::MatrixXd F = fit_iqr(split.controls, Quantile(0.5), 2).factors;
  const Eigen::VectorXd y1 = split.treated.row(0).transpose();
  BootstrapOptions bo;
  bo.B = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_qtt(y1, sim.panel.treatment().d, F, Quantile(0.5), bo));
}
BENCHMARK(BM_Bootstrap)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace

#include <benchmark/benchmark.h>

#include <random>

#include "qfmqtt/qr.hpp"
#include "qfmqtt/sqr.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Problem {
  MatrixXd X;
  VectorXd y;
};

Problem make_problem(int n, int p) {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> norm;
  Problem out{MatrixXd(n, p), VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    out.X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) out.X(i, j) = norm(gen);
  }
  out.y = out.X * VectorXd::Ones(p);
  for (int i = 0; i < n; ++i) out.y[i] += norm(gen);
  return out;
}

void BM_SolveQrCold(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const qfmqtt::QrProblem problem(p.X, p.y, qfmqtt::Quantile(0.25));
  for (auto _ : state) benchmark::DoNotOptimize(qfmqtt::solve_qr(problem));
}
BENCHMARK(BM_SolveQrCold)->Args({200, 3})->Args({400, 8})->Args({2000, 8});

void BM_SolveQrWarm(benchmark::State& state) {
  Problem p = make_problem(static_cast<int>(state.range(0)), 8);
  const qfmqtt::QrProblem problem(p.X, p.y, qfmqtt::Quantile(0.25));
  const auto basis = qfmqtt::solve_qr(problem).basis;
  // Small response shift, as between successive factor alternations.
  VectorXd shifted = p.y + 1e-3 * p.X.col(1);
  const qfmqtt::QrProblem next(p.X, shifted, qfmqtt::Quantile(0.25));
  for (auto _ : state) benchmark::DoNotOptimize(qfmqtt::solve_qr_warm(next, basis));
}
BENCHMARK(BM_SolveQrWarm)->Arg(400)->Arg(2000);

void BM_SolveSqr(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 8);
  const qfmqtt::QrProblem problem(p.X, p.y, qfmqtt::Quantile(0.25));
  for (auto _ : state) benchmark::DoNotOptimize(qfmqtt::fit_sqr(problem, qfmqtt::SmoothingSpec{0.5}));
}
BENCHMARK(BM_SolveSqr)->Arg(400)->Arg(2000);

}  // namespace
BENCHMARK_MAIN();

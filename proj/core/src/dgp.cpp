#include "qfmqtt/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <tuple>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/rng.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(DgpFamily family) {
  switch (family) {
    case DgpFamily::baseline: return "baseline";
    case DgpFamily::heavy_tail: return "heavy_tail";
    case DgpFamily::dependent: return "dependent";
    case DgpFamily::quantile_variant: return "quantile_variant";
  }
  return "baseline";
}

DgpFamily parse_dgp_family(std::string_view text) {
  if (text == "baseline") return DgpFamily::baseline;
  if (text == "heavy_tail" || text == "heavy-tail") return DgpFamily::heavy_tail;
  if (text == "dependent") return DgpFamily::dependent;
  if (text == "quantile_variant" || text == "quantile-variant") return DgpFamily::quantile_variant;
  throw InputError("unknown DGP family '" + std::string(text) +
                   "' (expected baseline, heavy_tail, dependent or quantile_variant)");
}

void DgpSpec::validate() const {
  if (N < 2) throw InputError("simulation needs at least 2 control units");
  if (T < 4) throw InputError("simulation needs at least 4 periods");
  if (J < 0) throw InputError("neighbour radius J must be nonnegative");
  if (!(std::fabs(ar) < 1.0)) throw InputError("error autoregression must satisfy |ar| < 1");
  if (!std::isfinite(neighbor_weight)) throw InputError("neighbour weight must be finite");
  if (!(innovation_df > 0.0)) throw InputError("innovation degrees of freedom must be positive");
  if (burn_in < 0) throw InputError("burn-in must be nonnegative");
}

namespace {

enum Role : std::uint64_t { kFactors = 1, kLoadings = 2, kErrors = 3, kErrorBurnIn = 4 };

Philox stream(const DgpSpec& spec, Role role) {
  return make_rng(spec.seed, {spec.replication, static_cast<std::uint64_t>(role)});
}

VectorXd ar_factor(Philox& rng, double rho, int T, int burn_in) {
  std::normal_distribution<double> normal;
  double f = normal(rng) / std::sqrt(1.0 - rho * rho);
  for (int b = 0; b < burn_in; ++b) f = rho * f + normal(rng);
  VectorXd out(T);
  for (int t = 0; t < T; ++t) {
    f = rho * f + normal(rng);
    out[t] = f;
  }
  return out;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Sorted draws from the stationary marginal of the dependent error process,
// simulated once per parameter set with a fixed seed.
std::shared_ptr<const std::vector<double>> dependent_error_draws(const DgpSpec& spec) {
  using Key = std::tuple<int, double, double, double>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const std::vector<double>>> cache;
  const Key key{spec.J, spec.ar, spec.neighbor_weight, spec.innovation_df};
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  constexpr int kDraws = 2'000'000;
  constexpr int kWarmup = 1'000;
  Philox rng(0x6a09e667f3bcc908ULL, 0);
  std::student_t_distribution<double> tdist(spec.innovation_df);
  auto draws = std::make_shared<std::vector<double>>();
  draws->reserve(kDraws);
  double u = 0.0;
  for (int k = -kWarmup; k < kDraws; ++k) {
    double shock = tdist(rng);
    double neighbours = 0.0;
    for (int j = 0; j < 2 * spec.J; ++j) neighbours += tdist(rng);
    u = spec.ar * u + shock + spec.neighbor_weight * neighbours;
    if (k >= 0) draws->push_back(u);
  }
  std::sort(draws->begin(), draws->end());
  cache.emplace(key, draws);
  return draws;
}

}  // namespace

DgpTruth::DgpTruth(const DgpSpec& spec, MatrixXd factors) : spec_(spec), factors_(std::move(factors)) {
  if (spec.family == DgpFamily::dependent && (spec.ar != 0.0 || spec.neighbor_weight != 0.0)) {
    error_draws_ = dependent_error_draws(spec);
  }
}

double DgpTruth::delta0(Quantile tau) const {
  const double p = tau.value();
  switch (spec_.family) {
    case DgpFamily::baseline:
    case DgpFamily::quantile_variant:
      return 0.5 + normal_quantile(p);
    case DgpFamily::heavy_tail:
      return 0.5 + boost::math::quantile(boost::math::students_t_distribution<double>(2.0), p);
    case DgpFamily::dependent: {
      if (!error_draws_) {
        return 0.5 + boost::math::quantile(boost::math::students_t_distribution<double>(spec_.innovation_df), p);
      }
      const auto& d = *error_draws_;
      const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(d.size())));
      return 0.5 + d[std::clamp<std::size_t>(k, 1, d.size()) - 1];
    }
  }
  return 0.0;
}

int DgpTruth::r0(Quantile tau) const {
  const double p = tau.value();
  if (spec_.family == DgpFamily::quantile_variant) {
    if (p <= 0.3) return 4;
    if (p <= 0.8) return p == 0.5 ? 4 : 5;
    return 6;
  }
  return p == 0.5 ? 2 : 3;
}

SimulatedPanel generate(const DgpSpec& spec) {
  spec.validate();
  const int N1 = spec.N + 1;
  const int T = spec.T;
  const int T0 = T / 2;

  Philox frng = stream(spec, kFactors);
  Philox lrng = stream(spec, kLoadings);
  Philox erng = stream(spec, kErrors);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif12(1.0, 2.0);

  const VectorXd f1 = ar_factor(frng, 0.8, T, spec.burn_in);
  const VectorXd f2 = ar_factor(frng, 0.5, T, spec.burn_in);
  MatrixXd Y(N1, T);
  VectorXd u1(T);
  MatrixXd oracle;

  if (spec.family != DgpFamily::quantile_variant) {
    VectorXd f3(T);
    for (int t = 0; t < T; ++t) f3[t] = std::fabs(normal(frng));
    VectorXd l1(N1), l2(N1), l3(N1);
    for (int i = 0; i < N1; ++i) l1[i] = normal(lrng);
    for (int i = 0; i < N1; ++i) l2[i] = normal(lrng);
    for (int i = 0; i < N1; ++i) l3[i] = unif12(lrng);

    MatrixXd U(N1, T);
    if (spec.family == DgpFamily::baseline) {
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < N1; ++i) U(i, t) = normal(erng);
    } else {
      const double df = spec.family == DgpFamily::heavy_tail ? 2.0 : spec.innovation_df;
      std::student_t_distribution<double> tdist(df);
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < N1; ++i) U(i, t) = tdist(erng);
      if (spec.family == DgpFamily::dependent) {
        // U holds the innovations e_it; build u_it with neighbour mixing and AR(1).
        Philox brng = stream(spec, kErrorBurnIn);
        auto mix = [&](const Eigen::Ref<const VectorXd>& e, int i) {
          double s = e[i];
          for (int k = 1; k <= spec.J; ++k) {
            s += spec.neighbor_weight * (e[((i - k) % N1 + N1) % N1] + e[(i + k) % N1]);
          }
          return s;
        };
        VectorXd u = VectorXd::Zero(N1);
        VectorXd e(N1);
        for (int b = 0; b < spec.burn_in; ++b) {
          for (int i = 0; i < N1; ++i) e[i] = tdist(brng);
          VectorXd next(N1);
          for (int i = 0; i < N1; ++i) next[i] = spec.ar * u[i] + mix(e, i);
          u = next;
        }
        for (int t = 0; t < T; ++t) {
          const VectorXd et = U.col(t);
          for (int i = 0; i < N1; ++i) {
            u[i] = spec.ar * u[i] + mix(et, i);
            U(i, t) = u[i];
          }
        }
      }
    }
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < N1; ++i) Y(i, t) = l1[i] * f1[t] + l2[i] * f2[t] + l3[i] * f3[t] * U(i, t);
    }
    u1 = U.row(0).transpose();
    oracle.resize(T, 3);
    oracle << f1, f2, f3;
  } else {
    VectorXd f3(T), f4(T), f5(T), f6(T);
    for (int t = 0; t < T; ++t) f3[t] = normal(frng);
    for (int t = 0; t < T; ++t) f4[t] = normal(frng);
    for (int t = 0; t < T; ++t) f5[t] = normal(frng);
    for (int t = 0; t < T; ++t) f6[t] = std::fabs(normal(frng));
    MatrixXd L(N1, 6);
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < N1; ++i) L(i, j) = normal(lrng);
    for (int i = 0; i < N1; ++i) L(i, 5) = unif12(lrng);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < N1; ++i) {
        double v = 0.0;
        while (v <= 0.0) v = unif01(erng);
        const double u = normal_quantile(v);
        double y = L(i, 0) * f1[t] + L(i, 1) * f2[t] + L(i, 2) * f3[t] + L(i, 5) * f6[t] * u;
        if (v > 0.3) y += L(i, 3) * f4[t];
        if (v > 0.8) y += L(i, 4) * f5[t];
        Y(i, t) = y;
        if (i == 0) u1[t] = u;
      }
    }
    oracle.resize(T, 6);
    oracle << f1, f2, f3, f4, f5, f6;
  }

  for (int t = T0; t < T; ++t) Y(0, t) += u1[t] + 0.5;

  PanelData panel(std::move(Y), {1}, T0 + 1);
  return SimulatedPanel{std::move(panel), DgpTruth(spec, std::move(oracle))};
}

}  // namespace qfmqtt

#include "qfmqtt/montecarlo.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "qfmqtt/baselines.hpp"
#include "qfmqtt/errors.hpp"
#include "qfmqtt/inference.hpp"
#include "qfmqtt/parallel.hpp"
#include "qfmqtt/qtt.hpp"
#include "qfmqtt/rng.hpp"
#include "qfmqtt/serialize.hpp"
#include "qfmqtt/sqr.hpp"

namespace qfmqtt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Estimator estimator) {
  switch (estimator) {
    case Estimator::nqtt: return "NQTT";
    case Estimator::sqtt: return "SQTT";
    case Estimator::oracle: return "Oracle";
    case Estimator::gscm: return "GSCM";
  }
  return "NQTT";
}

Estimator parse_estimator(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "NQTT") return Estimator::nqtt;
  if (upper == "SQTT") return Estimator::sqtt;
  if (upper == "ORACLE") return Estimator::oracle;
  if (upper == "GSCM") return Estimator::gscm;
  throw InputError("unknown estimator '" + std::string(text) + "' (expected NQTT, SQTT, Oracle or GSCM)");
}

void McOptions::validate() const {
  dgp.validate();
  if (estimators.empty()) throw InputError("no estimators requested");
  if (taus.empty()) throw InputError("empty quantile grid");
  if (!std::is_sorted(taus.begin(), taus.end()) ||
      std::adjacent_find(taus.begin(), taus.end()) != taus.end()) {
    throw InputError("quantile grid must be strictly increasing");
  }
  if (R < 1) throw InputError("replication count R must be positive");
  if (B < 0) throw InputError("bootstrap count B must be nonnegative");
  if (k_max < 1) throw InputError("k_max must be positive");
  if (!(bandwidth > 0.0)) throw InputError("bandwidth must be positive");
  if (restarts < 1) throw InputError("restarts must be positive");
  if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0)) throw InputError("max_failure_rate must lie in [0, 1)");
}

CellMetrics compute_cell_metrics(std::span<const double> estimates, double delta0, std::span<const double> boot_sd) {
  CellMetrics m;
  const auto n = static_cast<double>(estimates.size());
  if (estimates.empty()) {
    m.bias = m.rmse = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  if (!boot_sd.empty() && boot_sd.size() != estimates.size()) {
    throw InputError("bootstrap sd count does not match estimate count");
  }
  double sum = 0.0, sq = 0.0, mean = 0.0;
  for (double e : estimates) {
    sum += e - delta0;
    sq += (e - delta0) * (e - delta0);
    mean += e;
  }
  m.bias = sum / n;
  m.rmse = std::sqrt(sq / n);
  mean /= n;
  if (estimates.size() > 1) {
    double ss = 0.0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    m.empirical_sd = std::sqrt(ss / (n - 1.0));
  }
  if (!boot_sd.empty()) {
    double sd_sum = 0.0, covered = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      sd_sum += boot_sd[i];
      const double half = 1.96 * boot_sd[i];
      covered += (delta0 >= estimates[i] - half && delta0 <= estimates[i] + half) ? 1.0 : 0.0;
    }
    m.sd = sd_sum / n;
    m.coverage = covered / n;
  }
  return m;
}

const McCell& McReport::cell(Quantile tau, Estimator estimator) const {
  for (const auto& c : cells) {
    if (c.tau == tau.value() && c.estimator == estimator) return c;
  }
  throw InputError("no Monte Carlo cell for tau=" + std::to_string(tau.value()) + " estimator " +
                   std::string(to_string(estimator)));
}

bool McReport::all_valid() const {
  return std::all_of(cells.begin(), cells.end(), [](const McCell& c) { return c.valid; });
}

namespace {

enum Role : std::uint64_t { kRank = 11, kIqr = 12, kIsqr = 13, kBootstrap = 14 };

std::uint64_t substream_seed(const McOptions& o, int replication, Role role, std::size_t tau_index) {
  return stream_id({o.dgp.seed, static_cast<std::uint64_t>(replication), role, tau_index});
}

bool wants(const McOptions& o, Estimator e) {
  return std::find(o.estimators.begin(), o.estimators.end(), e) != o.estimators.end();
}

template <typename Fn>
void attempt(McRecord& rec, Fn&& fn) {
  try {
    fn();
    rec.ok = std::isfinite(rec.delta);
    if (!rec.ok) rec.error = "non-finite estimate";
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
}

std::vector<McRecord> run_replication(const McOptions& o, int replication) {
  DgpSpec spec = o.dgp;
  spec.replication = static_cast<std::uint64_t>(replication);
  const SimulatedPanel sim = generate(spec);
  const SplitPanel split = split_control_treated(sim.panel);
  const VectorXd y1 = split.treated.row(0).transpose();
  const VectorXd& d1 = sim.panel.treatment().d;

  std::vector<Estimator> order;
  for (Estimator e : {Estimator::nqtt, Estimator::sqtt, Estimator::oracle, Estimator::gscm}) {
    if (wants(o, e)) order.push_back(e);
  }
  std::map<std::pair<std::size_t, Estimator>, McRecord> out;
  for (std::size_t q = 0; q < o.taus.size(); ++q) {
    for (Estimator e : order) {
      McRecord rec;
      rec.replication = replication;
      rec.tau = o.taus[q].value();
      rec.estimator = e;
      rec.delta0 = sim.truth.delta0(o.taus[q]);
      out[{q, e}] = rec;
    }
  }

  if (wants(o, Estimator::gscm)) {
    const int r_max = o.gscm_r_max > 0 ? o.gscm_r_max : (spec.family == DgpFamily::quantile_variant ? 8 : 5);
    try {
      const GscmResult g = gscm_qtt(sim.panel, o.taus, o.gscm_r_min, r_max);
      for (std::size_t q = 0; q < o.taus.size(); ++q) {
        McRecord& rec = out[{q, Estimator::gscm}];
        rec.delta = g.estimates[q].delta;
        rec.r = g.estimates[q].r;
        rec.ok = std::isfinite(rec.delta);
      }
    } catch (const std::exception& e) {
      for (std::size_t q = 0; q < o.taus.size(); ++q) out[{q, Estimator::gscm}].error = e.what();
    }
  }

  for (std::size_t q = 0; q < o.taus.size(); ++q) {
    const Quantile tau = o.taus[q];
    if (wants(o, Estimator::oracle)) {
      McRecord& rec = out[{q, Estimator::oracle}];
      attempt(rec, [&] {
        const QttEstimate est = oracle_qtt(sim.panel, tau, sim.truth.factors());
        rec.delta = est.delta;
        rec.r = est.r;
      });
    }
    const bool nqtt = wants(o, Estimator::nqtt);
    const bool sqtt = wants(o, Estimator::sqtt);
    if (!nqtt && !sqtt) continue;

    int r_hat = 0;
    std::string rank_error;
    try {
      FactorOptions fo;
      fo.restarts = o.restarts;
      fo.seed = substream_seed(o, replication, kRank, q);
      r_hat = select_rank(split.controls, tau, o.k_max, fo).r_hat;
      if (r_hat < 1) rank_error = "rank selection returned zero factors";
    } catch (const std::exception& e) {
      rank_error = std::string("rank selection failed: ") + e.what();
    }

    for (Estimator e : {Estimator::nqtt, Estimator::sqtt}) {
      if (!wants(o, e)) continue;
      McRecord& rec = out[{q, e}];
      if (!rank_error.empty()) {
        rec.error = rank_error;
        continue;
      }
      attempt(rec, [&] {
        FactorOptions fo;
        fo.restarts = o.restarts;
        QfmFit fit;
        if (e == Estimator::nqtt) {
          fo.seed = substream_seed(o, replication, kIqr, q);
          fit = fit_iqr(split.controls, tau, r_hat, fo);
        } else {
          fo.seed = substream_seed(o, replication, kIsqr, q);
          fit = fit_isqr(split.controls, tau, r_hat, SmoothingSpec{o.bandwidth}, fo);
        }
        const Stage1 stage = e == Estimator::nqtt ? Stage1::iqr : Stage1::isqr;
        const QttEstimate est = estimate_qtt(y1, d1, fit.factors, tau, stage);
        rec.delta = est.delta;
        rec.r = est.r;
        if (o.B > 0) {
          BootstrapOptions bo;
          bo.B = o.B;
          bo.seed = substream_seed(o, replication, kBootstrap, q);
          const BootstrapResult boot = bootstrap_qtt(y1, d1, fit.factors, tau, bo);
          rec.boot_sd = boot.sd;
          rec.ci_lower = boot.ci_lower;
          rec.ci_upper = boot.ci_upper;
        }
      });
    }
  }

  std::vector<McRecord> records;
  records.reserve(out.size());
  for (std::size_t q = 0; q < o.taus.size(); ++q) {
    for (Estimator e : order) records.push_back(out[{q, e}]);
  }
  return records;
}

}  // namespace

McReport run_mc(const McOptions& options) {
  options.validate();
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<McRecord>> slots(static_cast<std::size_t>(options.R));
  parallel_for(slots.size(), options.jobs,
               [&](std::size_t j) { slots[j] = run_replication(options, static_cast<int>(j)); });

  McReport report;
  report.options = options;
  for (auto& slot : slots) {
    for (auto& rec : slot) report.records.push_back(std::move(rec));
  }

  for (Quantile tau : options.taus) {
    for (Estimator e : {Estimator::nqtt, Estimator::sqtt, Estimator::oracle, Estimator::gscm}) {
      if (!wants(options, e)) continue;
      McCell cell;
      cell.tau = tau.value();
      cell.estimator = e;
      std::vector<double> estimates, sds;
      double r_sum = 0.0;
      bool bootstrapped = options.B > 0 && (e == Estimator::nqtt || e == Estimator::sqtt);
      for (const auto& rec : report.records) {
        if (rec.tau != cell.tau || rec.estimator != e) continue;
        cell.delta0 = rec.delta0;
        ++cell.replications;
        if (!rec.ok) {
          ++cell.failures;
          continue;
        }
        estimates.push_back(rec.delta);
        r_sum += rec.r;
        if (bootstrapped) sds.push_back(rec.boot_sd);
      }
      cell.metrics = compute_cell_metrics(estimates, cell.delta0, sds);
      cell.mean_r = estimates.empty() ? 0.0 : r_sum / static_cast<double>(estimates.size());
      cell.valid = !estimates.empty() &&
                   cell.failures <= options.max_failure_rate * static_cast<double>(cell.replications);
      report.cells.push_back(cell);
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

void write_report_csv(std::ostream& out, const McReport& report) {
  const auto& o = report.options;
  out << "family,N,T,R,B,tau,estimator,delta0,bias,rmse,empirical_sd,sd,coverage,mean_r,failures,valid\n";
  for (const auto& c : report.cells) {
    out << to_string(o.dgp.family) << ',' << o.dgp.N << ',' << o.dgp.T << ',' << o.R << ',' << o.B << ','
        << csv_number(c.tau) << ',' << to_string(c.estimator) << ',' << csv_number(c.delta0) << ','
        << csv_number(c.metrics.bias) << ',' << csv_number(c.metrics.rmse) << ','
        << csv_number(c.metrics.empirical_sd) << ',' << csv_number(c.metrics.sd) << ','
        << csv_number(c.metrics.coverage) << ',' << csv_number(c.mean_r) << ',' << c.failures << ','
        << (c.valid ? 1 : 0) << '\n';
  }
}

void write_records_jsonl(std::ostream& out, const McReport& report) {
  for (const auto& rec : report.records) out << to_json(rec).dump() << '\n';
}

}  // namespace qfmqtt

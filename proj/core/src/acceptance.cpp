#include "qfmqtt/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qfmqtt/dgp.hpp"
#include "qfmqtt/errors.hpp"
#include "qfmqtt/montecarlo.hpp"
#include "qfmqtt/parallel.hpp"
#include "qfmqtt/qfm.hpp"

namespace qfmqtt {

using Eigen::MatrixXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Context = AcceptanceOptions;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << v;
  return s.str();
}

void save(const Context& ctx, const std::string& name, const McReport& report) {
  if (ctx.out_dir.empty()) return;
  std::ofstream csv(ctx.out_dir + "/" + name + ".csv");
  write_report_csv(csv, report);
  std::ofstream jsonl(ctx.out_dir + "/" + name + ".jsonl");
  write_records_jsonl(jsonl, report);
}

McOptions mc(DgpFamily family, int N, int T, std::vector<Estimator> estimators, double tau, const Context& ctx) {
  McOptions o;
  o.dgp.family = family;
  o.dgp.N = N;
  o.dgp.T = T;
  o.dgp.seed = ctx.seed;
  o.estimators = std::move(estimators);
  o.taus = {Quantile(tau)};
  o.R = kDeskReplications;
  o.B = 0;
  o.jobs = ctx.jobs;
  return o;
}

std::string cell_text(const McCell& c) {
  return std::string(to_string(c.estimator)) + " bias=" + fmt(c.metrics.bias) + " rmse=" + fmt(c.metrics.rmse) +
         " failures=" + std::to_string(c.failures) + (c.valid ? "" : " INVALID");
}

Outcome criterion1(const Context& ctx) {
  const McReport r = run_mc(mc(DgpFamily::baseline, 200, 400, {Estimator::nqtt}, 0.5, ctx));
  save(ctx, "criterion1", r);
  const McCell& c = r.cell(Quantile(0.5), Estimator::nqtt);
  const bool pass = c.valid && std::fabs(c.metrics.bias) <= 0.05 && c.metrics.rmse >= 0.12 && c.metrics.rmse <= 0.21;
  return {pass, cell_text(c)};
}

Outcome criterion2(const Context& ctx) {
  const McReport r = run_mc(mc(DgpFamily::baseline, 100, 200, {Estimator::nqtt, Estimator::gscm}, 0.1, ctx));
  save(ctx, "criterion2", r);
  const McCell& n = r.cell(Quantile(0.1), Estimator::nqtt);
  const McCell& g = r.cell(Quantile(0.1), Estimator::gscm);
  const bool pass = n.valid && g.valid && g.metrics.bias <= -1.4 && std::fabs(n.metrics.bias) <= 0.2 &&
                    std::fabs(g.metrics.bias) > 5.0 * std::fabs(n.metrics.bias);
  return {pass, cell_text(g) + "; " + cell_text(n)};
}

Outcome criterion3(const Context& ctx) {
  McOptions o = mc(DgpFamily::baseline, 100, 200, {Estimator::sqtt}, 0.5, ctx);
  o.B = kDeskBootstrap;
  const McReport r = run_mc(o);
  save(ctx, "criterion3", r);
  const McCell& c = r.cell(Quantile(0.5), Estimator::sqtt);
  const bool pass = c.valid && c.metrics.coverage >= 0.90 && c.metrics.coverage <= 0.99;
  return {pass, cell_text(c) + " sd=" + fmt(c.metrics.sd) + " coverage=" + fmt(c.metrics.coverage)};
}

Outcome criterion4(const Context& ctx) {
  const McReport r = run_mc(mc(DgpFamily::heavy_tail, 100, 200, {Estimator::nqtt}, 0.5, ctx));
  save(ctx, "criterion4", r);
  const McCell& c = r.cell(Quantile(0.5), Estimator::nqtt);
  const bool pass = c.valid && std::fabs(c.metrics.bias) <= 0.08 && c.metrics.rmse <= 0.45;
  return {pass, cell_text(c)};
}

Outcome criterion5(const Context& ctx) {
  constexpr int kSeeds = 50;
  std::vector<int> r50(kSeeds), r25(kSeeds);
  parallel_for(kSeeds, ctx.jobs, [&](std::size_t s) {
    DgpSpec spec;
    spec.N = 200;
    spec.T = 200;
    spec.seed = ctx.seed + 1000 + s;
    const MatrixXd controls = split_control_treated(generate(spec).panel).controls;
    FactorOptions fo;
    fo.seed = s;
    r50[s] = select_rank(controls, Quantile(0.5), 8, fo).r_hat;
    r25[s] = select_rank(controls, Quantile(0.25), 8, fo).r_hat;
  });
  int hits50 = 0, hits25 = 0, both = 0;
  for (int s = 0; s < kSeeds; ++s) {
    hits50 += r50[s] == 2;
    hits25 += r25[s] == 3;
    both += r50[s] == 2 && r25[s] == 3;
  }
  const bool pass = both >= 0.9 * kSeeds;
  return {pass, "r=2 at 0.5: " + std::to_string(hits50) + "/50, r=3 at 0.25: " + std::to_string(hits25) +
                    "/50, both: " + std::to_string(both) + "/50"};
}

Outcome criterion7(const Context& ctx) {
  const McReport n = run_mc(mc(DgpFamily::quantile_variant, 100, 200, {Estimator::nqtt}, 0.5, ctx));
  const McReport g = run_mc(mc(DgpFamily::quantile_variant, 100, 200, {Estimator::gscm}, 0.1, ctx));
  save(ctx, "criterion7_nqtt", n);
  save(ctx, "criterion7_gscm", g);
  const McCell& nc = n.cell(Quantile(0.5), Estimator::nqtt);
  const McCell& gc = g.cell(Quantile(0.1), Estimator::gscm);
  const bool pass = nc.valid && gc.valid && std::fabs(nc.metrics.bias) <= 0.12 && std::fabs(gc.metrics.bias) >= 1.0;
  return {pass, "tau=0.5 " + cell_text(nc) + "; tau=0.1 " + cell_text(gc)};
}

}  // namespace

std::vector<int> simulation_criteria() { return {1, 2, 3, 4, 5, 7}; }

CriterionResult run_acceptance_criterion(int id, const AcceptanceOptions& options) {
  Outcome (*fn)(const Context&) = nullptr;
  switch (id) {
    case 1: fn = criterion1; break;
    case 2: fn = criterion2; break;
    case 3: fn = criterion3; break;
    case 4: fn = criterion4; break;
    case 5: fn = criterion5; break;
    case 7: fn = criterion7; break;
    default: throw InputError("no simulation-based acceptance criterion " + std::to_string(id));
  }
  const auto start = std::chrono::steady_clock::now();
  CriterionResult result;
  result.id = id;
  try {
    const Outcome o = fn(options);
    result.pass = o.pass;
    result.detail = o.detail;
  } catch (const std::exception& e) {
    result.pass = false;
    result.detail = std::string("error: ") + e.what();
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace qfmqtt

#include "qfmqtt/serialize.hpp"

#include <cmath>

namespace qfmqtt {

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

}  // namespace

Json to_json(const QttEstimate& e) {
  return Json{{"tau", e.tau},
              {"delta", number(e.delta)},
              {"lambda1", vector_json(e.lambda1)},
              {"r", e.r},
              {"stage1", std::string(to_string(e.stage1))},
              {"estimator", e.estimator}};
}

Json to_json(const BlockPlan& p) {
  return Json{{"T0", p.T0},
              {"T1", p.T1},
              {"pre_block", p.pre_block},
              {"post_block", p.post_block},
              {"pre_draws", p.pre_draws},
              {"post_draws", p.post_draws}};
}

Json to_json(const BootstrapResult& r, bool include_replicates) {
  Json out{{"tau", r.tau},
           {"delta_hat", number(r.delta_hat)},
           {"sd", number(r.sd)},
           {"ci", Json::array({number(r.ci_lower), number(r.ci_upper)})},
           {"percentile_ci", Json::array({number(r.percentile_lower), number(r.percentile_upper)})},
           {"B", r.B},
           {"dropped", r.dropped},
           {"seed", r.seed},
           {"block_plan", to_json(r.plan)},
           {"warnings", r.warnings}};
  if (include_replicates) out["replicates"] = vector_json(r.replicates);
  return out;
}

Json to_json(const RankSelection& s) {
  return Json{{"r_hat", s.r_hat}, {"k", s.k}, {"sigma_diag", vector_json(s.sigma_diag)}, {"threshold", s.threshold}};
}

Json to_json(const QfmFit& f) {
  return Json{{"tau", f.tau.value()},
              {"r", f.r},
              {"stage1", std::string(to_string(f.stage))},
              {"objective", number(f.objective)},
              {"iterations", f.iterations},
              {"converged", f.converged}};
}

Json to_json(const DgpSpec& s) {
  Json out{{"family", std::string(to_string(s.family))},
           {"N", s.N},
           {"T", s.T},
           {"seed", s.seed},
           {"burn_in", s.burn_in}};
  if (s.family == DgpFamily::dependent) {
    out["J"] = s.J;
    out["ar"] = s.ar;
    out["neighbor_weight"] = s.neighbor_weight;
    out["innovation_df"] = s.innovation_df;
    out["neighbor_boundary"] = "circular";
  }
  return out;
}

Json to_json(const McOptions& o) {
  Json estimators = Json::array();
  for (Estimator e : o.estimators) estimators.push_back(std::string(to_string(e)));
  Json taus = Json::array();
  for (Quantile t : o.taus) taus.push_back(t.value());
  return Json{{"dgp", to_json(o.dgp)},
              {"estimators", estimators},
              {"taus", taus},
              {"R", o.R},
              {"B", o.B},
              {"k_max", o.k_max},
              {"bandwidth", o.bandwidth},
              {"restarts", o.restarts},
              {"gscm_r_min", o.gscm_r_min},
              {"gscm_r_max", o.gscm_r_max},
              {"jobs", o.jobs},
              {"max_failure_rate", o.max_failure_rate},
              {"full_scale", o.full_scale}};
}

Json to_json(const McRecord& r) {
  Json out{{"replication", r.replication},
           {"tau", r.tau},
           {"estimator", std::string(to_string(r.estimator))},
           {"ok", r.ok},
           {"delta", number(r.delta)},
           {"delta0", number(r.delta0)},
           {"r", r.r},
           {"boot_sd", number(r.boot_sd)},
           {"ci", Json::array({number(r.ci_lower), number(r.ci_upper)})}};
  if (!r.error.empty()) out["error"] = r.error;
  return out;
}

Json to_json(const McCell& c) {
  return Json{{"tau", c.tau},
              {"estimator", std::string(to_string(c.estimator))},
              {"delta0", number(c.delta0)},
              {"replications", c.replications},
              {"failures", c.failures},
              {"bias", number(c.metrics.bias)},
              {"rmse", number(c.metrics.rmse)},
              {"empirical_sd", number(c.metrics.empirical_sd)},
              {"sd", number(c.metrics.sd)},
              {"coverage", number(c.metrics.coverage)},
              {"mean_r", c.mean_r},
              {"valid", c.valid}};
}

Json to_json(const McReport& r) {
  Json cells = Json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c));
  const double per_rep = r.options.R > 0 ? r.seconds / r.options.R : 0.0;
  return Json{{"options", to_json(r.options)},
              {"cells", cells},
              {"runtime", Json{{"seconds", r.seconds}, {"seconds_per_replication", per_rep}}},
              {"all_valid", r.all_valid()}};
}

}  // namespace qfmqtt

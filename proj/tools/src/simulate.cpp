#include <fstream>
#include <ostream>

#include "common.hpp"
#include "qfmqtt/acceptance.hpp"
#include "qfmqtt/montecarlo.hpp"

namespace qfmqtt::cli {

namespace {

struct SimulateConfig {
  std::string family = "baseline";
  int N = 100;
  int T = 200;
  int R = kDeskReplications;
  int boot_B = kDeskBootstrap;
  std::vector<std::string> estimators{"NQTT", "SQTT", "Oracle", "GSCM"};
  std::string tau = "0.1,0.25,0.5,0.75,0.9";
  std::uint64_t seed = 0;
  std::string out;
  unsigned jobs = 1;
  int kmax = 8;
  double bandwidth = 0.5;
  int restarts = 3;
  int J = 3;
  double ar = 0.2;
  double neighbor_weight = 0.2;
  int gscm_rmax = 0;
  bool full_scale = false;
  std::string preset;

  Json to_json() const {
    return Json{{"family", family}, {"N", N}, {"T", T}, {"R", R}, {"boot_B", boot_B}, {"estimators", estimators},
                {"tau", tau}, {"seed", seed}, {"out", out}, {"jobs", jobs}, {"kmax", kmax},
                {"bandwidth", bandwidth}, {"restarts", restarts}, {"J", J}, {"ar", ar},
                {"neighbor_weight", neighbor_weight}, {"gscm_rmax", gscm_rmax}, {"full_scale", full_scale},
                {"preset", preset.empty() ? Json(nullptr) : Json(preset)}};
  }
};

int run_acceptance_preset(const SimulateConfig& c, const std::filesystem::path& out_dir,
                          const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  AcceptanceOptions options;
  options.jobs = c.jobs;
  options.out_dir = out_dir.string();
  Timings timings;
  timings.start("total");
  Json results = Json::array();
  bool all = true;
  for (int id : simulation_criteria()) {
    const CriterionResult r = run_acceptance_criterion(id, options);
    out << "criterion " << id << ": " << (r.pass ? "PASS" : "FAIL") << " (" << r.detail << ")" << std::endl;
    results.push_back(Json{{"criterion", id}, {"pass", r.pass}, {"detail", r.detail}, {"seconds", r.seconds}});
    all = all && r.pass;
  }
  timings.stop("total");
  write_json_file(out_dir / "acceptance.json", Json{{"criteria", results}, {"all_pass", all}});
  write_json_file(out_dir / "manifest.json",
                  make_manifest("simulate", args, c.to_json(), timings, {"acceptance.json", "manifest.json"}));
  if (!all) {
    report_error(out_dir, err, error_json(kEstimationFailure, "acceptance", "one or more acceptance criteria failed"));
    return kEstimationFailure;
  }
  return kSuccess;
}

}  // namespace

int run_simulate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  SimulateConfig c;
  std::string config_path;
  CLI::App app{"Monte Carlo study of the QTT estimators on a simulated design", "qfmqtt simulate"};
  app.add_option("--config", config_path, "JSON file with option values; command-line flags win");
  app.add_option("--family", c.family, "baseline, heavy_tail, dependent or quantile_variant");
  app.add_option("--N", c.N, "Control units");
  app.add_option("--T", c.T, "Periods");
  auto* r_opt = app.add_option("--R", c.R, "Replications");
  auto* b_opt = app.add_option("--boot-B", c.boot_B, "Bootstrap replicates for NQTT/SQTT (0 disables)");
  app.add_option("--estimators", c.estimators, "Comma list of NQTT, SQTT, Oracle, GSCM")->delimiter(',');
  app.add_option("--tau", c.tau, "Quantile grid: comma list or start:stop:step");
  app.add_option("--seed", c.seed, "RNG seed");
  app.add_option("--out", c.out, "Output directory");
  app.add_option("--jobs", c.jobs, "Concurrent replications (0 = hardware)");
  app.add_option("--kmax", c.kmax, "Probe rank for factor-number selection");
  app.add_option("--bandwidth", c.bandwidth, "Smoothing bandwidth for SQTT");
  app.add_option("--restarts", c.restarts, "Random restarts of the factor alternation");
  app.add_option("--J", c.J, "Neighbour radius of the dependent-error design");
  app.add_option("--ar", c.ar, "Error autoregression of the dependent-error design");
  app.add_option("--neighbor-weight", c.neighbor_weight, "Neighbour weight of the dependent-error design");
  app.add_option("--gscm-rmax", c.gscm_rmax, "Largest GSCM candidate rank (0 = design default)");
  app.add_flag("--full-scale", c.full_scale, "Use R = 1000 and B = 1000 unless given explicitly");
  app.add_option("--preset", c.preset, "Named study; 'acceptance' runs the simulation acceptance criteria")
      ->check(CLI::IsMember({"acceptance"}));

  std::filesystem::path out_dir;
  return guarded(out_dir, err, [&]() -> int {
    parse_args(app, args);
    if (!config_path.empty()) apply_config(app, read_json_file(config_path));
    if (c.out.empty()) throw InputError("--out is required");
    if (c.full_scale) {
      if (r_opt->count() == 0) c.R = kFullReplications;
      if (b_opt->count() == 0) c.boot_B = kFullBootstrap;
    }

    McOptions o;
    o.dgp.family = parse_dgp_family(c.family);
    o.dgp.N = c.N;
    o.dgp.T = c.T;
    o.dgp.seed = c.seed;
    o.dgp.J = c.J;
    o.dgp.ar = c.ar;
    o.dgp.neighbor_weight = c.neighbor_weight;
    o.estimators.clear();
    for (const auto& e : c.estimators) o.estimators.push_back(parse_estimator(e));
    o.taus = parse_tau_grid(c.tau);
    o.R = c.R;
    o.B = c.boot_B;
    o.k_max = c.kmax;
    o.bandwidth = c.bandwidth;
    o.restarts = c.restarts;
    o.gscm_r_max = c.gscm_rmax;
    o.jobs = c.jobs;
    o.full_scale = c.full_scale;
    o.validate();

    out_dir = c.out;
    ensure_directory(out_dir);
    if (c.preset == "acceptance") return run_acceptance_preset(c, out_dir, args, out, err);

    Timings timings;
    timings.start("total");
    const McReport report = run_mc(o);
    timings.stop("total");

    std::ofstream csv(out_dir / "report.csv");
    write_report_csv(csv, report);
    std::ofstream jsonl(out_dir / "replicates.jsonl");
    write_records_jsonl(jsonl, report);
    write_json_file(out_dir / "report.json", to_json(report));

    std::vector<std::string> outputs{"report.csv", "report.json", "replicates.jsonl", "manifest.json"};
    if (!report.all_valid()) outputs.push_back("error.json");
    write_json_file(out_dir / "manifest.json", make_manifest("simulate", args, c.to_json(), timings, outputs));

    for (const auto& cell : report.cells) {
      out << to_string(cell.estimator) << " tau=" << cell.tau << " bias=" << cell.metrics.bias
          << " rmse=" << cell.metrics.rmse;
      if (std::isfinite(cell.metrics.coverage)) out << " coverage=" << cell.metrics.coverage;
      if (!cell.valid) out << " INVALID (" << cell.failures << " failures)";
      out << '\n';
    }
    if (!report.all_valid()) {
      Json invalid = Json::array();
      for (const auto& cell : report.cells) {
        if (!cell.valid) invalid.push_back(to_json(cell));
      }
      Json e = error_json(kEstimationFailure, "invalid_cells", "more than the tolerated share of replications failed");
      e["error"]["cells"] = invalid;
      report_error(out_dir, err, e);
      return kEstimationFailure;
    }
    return kSuccess;
  });
}

}  // namespace qfmqtt::cli

#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "common.hpp"
#include "qfmqtt/errors.hpp"
#include "qfmqtt/inference.hpp"
#include "qfmqtt/panel.hpp"
#include "qfmqtt/qfm.hpp"
#include "qfmqtt/qtt.hpp"
#include "qfmqtt/rng.hpp"
#include "qfmqtt/sqr.hpp"

namespace qfmqtt::cli {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct EstimateConfig {
  std::string input;
  std::string format = "wide";
  std::vector<std::string> treated;
  std::string treatment_start;
  std::vector<std::string> covariates;
  std::string tau = "0.05:0.95:0.05";
  std::string stage1 = "iqr";
  int kmax = 8;
  double bandwidth = 0.5;
  int boot_B = 300;
  std::optional<int> pre_block;
  std::optional<int> post_block;
  int restarts = 3;
  std::uint64_t seed = 0;
  std::string out;
  unsigned jobs = 1;

  Json to_json() const {
    Json j{{"input", input},     {"format", format},   {"treated", treated},
           {"treatment_start", treatment_start.empty() ? Json(nullptr) : Json(treatment_start)},
           {"covariates", covariates},
           {"tau", tau},         {"stage1", stage1},   {"kmax", kmax},
           {"bandwidth", bandwidth},                   {"boot_B", boot_B},
           {"pre_block", pre_block ? Json(*pre_block) : Json(nullptr)},
           {"post_block", post_block ? Json(*post_block) : Json(nullptr)},
           {"restarts", restarts}, {"seed", seed},     {"out", out},
           {"jobs", jobs}};
    return j;
  }
};

struct UnitResult {
  int unit = 0;
  std::string label;
  std::optional<QttEstimate> estimate;
  std::optional<BootstrapResult> bootstrap;
  VectorXd path;
  std::string error;
};

struct TauResult {
  Quantile tau{0.5};
  std::optional<RankSelection> rank;
  std::optional<QfmFit> fit;
  std::vector<UnitResult> units;
  std::string error;
};

enum Role : std::uint64_t { kRank = 1, kFit = 2, kBootstrap = 3 };

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

}  // namespace

int run_estimate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  EstimateConfig c;
  std::string config_path;
  CLI::App app{"Estimate quantile treatment effects on the treated from a panel file", "qfmqtt estimate"};
  app.add_option("--config", config_path, "JSON file with option values; command-line flags win");
  app.add_option("--input", c.input, "Panel CSV file");
  app.add_option("--format", c.format, "wide or long")->check(CLI::IsMember({"wide", "long", "wide-csv", "long-csv"}));
  app.add_option("--treated", c.treated, "Treated unit label(s); required for wide files")->delimiter(',');
  app.add_option("--treatment-start", c.treatment_start, "Time label of the first treated period");
  app.add_option("--covariates", c.covariates, "Wide-file columns holding covariate series")->delimiter(',');
  app.add_option("--tau", c.tau, "Quantile grid: comma list or start:stop:step");
  app.add_option("--stage1", c.stage1, "First-stage estimator: iqr or isqr");
  app.add_option("--kmax", c.kmax, "Probe rank for factor-number selection");
  app.add_option("--bandwidth", c.bandwidth, "Smoothing bandwidth for isqr");
  app.add_option("--boot-B", c.boot_B, "Bootstrap replicates (0 disables inference)");
  app.add_option("--pre-block", c.pre_block, "Pre-treatment block size (default floor(T0^(1/3)))");
  app.add_option("--post-block", c.post_block, "Post-treatment block size (default floor(T1^(1/3)))");
  app.add_option("--restarts", c.restarts, "Random restarts of the factor alternation");
  app.add_option("--seed", c.seed, "RNG seed");
  app.add_option("--out", c.out, "Output directory");
  app.add_option("--jobs", c.jobs, "Worker threads (0 = hardware)");

  std::filesystem::path out_dir;
  return guarded(out_dir, err, [&]() -> int {
    parse_args(app, args);
    if (!config_path.empty()) apply_config(app, read_json_file(config_path));
    if (c.input.empty()) throw InputError("--input is required");
    if (c.out.empty()) throw InputError("--out is required");
    out_dir = c.out;
    ensure_directory(out_dir);

    const std::vector<Quantile> taus = parse_tau_grid(c.tau);
    const Stage1 stage = parse_stage1(c.stage1);
    if (c.boot_B < 0) throw InputError("--boot-B must be nonnegative");
    SmoothingSpec smoothing{c.bandwidth};
    smoothing.validate();

    Timings timings;
    timings.start("total");
    timings.start("load");
    PanelSchema schema;
    schema.treated_labels = c.treated;
    if (!c.treatment_start.empty()) schema.treatment_start_time = c.treatment_start;
    schema.covariate_labels = c.covariates;
    const PanelData panel = load_panel(c.input, parse_panel_format(c.format), schema);
    timings.stop("load");

    const MatrixXd block = first_stage_block(panel);
    const SplitPanel split = split_control_treated(panel);
    const VectorXd d = panel.treatment().d;
    const auto& labels = panel.unit_labels();

    timings.start("estimate");
    std::vector<TauResult> results;
    bool failed = false;
    for (std::size_t q = 0; q < taus.size(); ++q) {
      TauResult tr;
      tr.tau = taus[q];
      try {
        FactorOptions fo;
        fo.restarts = c.restarts;
        fo.jobs = c.jobs;
        fo.seed = stream_id({c.seed, kRank, q});
        tr.rank = select_rank(block, tr.tau, c.kmax, fo);
        fo.seed = stream_id({c.seed, kFit, q});
        tr.fit = stage == Stage1::iqr ? fit_iqr(block, tr.tau, tr.rank->r_hat, fo)
                                      : fit_isqr(block, tr.tau, tr.rank->r_hat, smoothing, fo);
      } catch (const EstimationError& e) {
        tr.error = e.what();
        failed = true;
      }
      for (std::size_t u = 0; u < split.treated_ids.size(); ++u) {
        UnitResult ur;
        ur.unit = split.treated_ids[u];
        ur.label = labels.empty() ? std::to_string(ur.unit) : labels[static_cast<std::size_t>(ur.unit - 1)];
        if (!tr.fit) {
          ur.error = "first stage failed: " + tr.error;
          tr.units.push_back(ur);
          continue;
        }
        const VectorXd y = split.treated.row(static_cast<Eigen::Index>(u)).transpose();
        try {
          ur.estimate = estimate_qtt(y, d, tr.fit->factors, tr.tau, stage);
          ur.path = predict_quantile_path(ur.estimate->lambda1, tr.fit->factors);
          if (c.boot_B > 0) {
            BootstrapOptions bo;
            bo.B = c.boot_B;
            bo.seed = stream_id({c.seed, kBootstrap, q, static_cast<std::uint64_t>(ur.unit)});
            bo.pre_block = c.pre_block;
            bo.post_block = c.post_block;
            bo.jobs = c.jobs;
            ur.bootstrap = bootstrap_qtt(y, d, tr.fit->factors, tr.tau, bo);
          }
        } catch (const EstimationError& e) {
          ur.error = e.what();
          failed = true;
        }
        tr.units.push_back(ur);
      }
      for (const auto& ur : tr.units) {
        out << "tau=" << tr.tau.value() << " unit=" << ur.label;
        if (ur.estimate) {
          out << " r=" << ur.estimate->r << " delta=" << ur.estimate->delta;
          if (ur.bootstrap) out << " ci=[" << ur.bootstrap->ci_lower << ", " << ur.bootstrap->ci_upper << "]";
        } else {
          out << " error: " << ur.error;
        }
        out << '\n';
      }
      results.push_back(std::move(tr));
    }
    timings.stop("estimate");

    timings.start("write");
    Json estimates = Json::array();
    for (const auto& tr : results) {
      Json jt{{"tau", tr.tau.value()}};
      if (tr.rank) jt["rank_selection"] = to_json(*tr.rank);
      if (tr.fit) jt["first_stage"] = to_json(*tr.fit);
      if (!tr.error.empty()) jt["error"] = tr.error;
      Json units = Json::array();
      for (const auto& ur : tr.units) {
        Json ju{{"unit", ur.unit}, {"label", ur.label}};
        if (ur.estimate) ju["estimate"] = to_json(*ur.estimate);
        if (ur.bootstrap) ju["bootstrap"] = to_json(*ur.bootstrap);
        if (!ur.error.empty()) ju["error"] = ur.error;
        units.push_back(ju);
      }
      jt["units"] = units;
      estimates.push_back(jt);
    }
    write_json_file(out_dir / "estimates.json",
                    Json{{"panel", Json{{"units", panel.units()},
                                        {"controls", panel.controls()},
                                        {"periods", panel.periods()},
                                        {"T0", panel.pre_periods()},
                                        {"T1", panel.post_periods()},
                                        {"covariates", panel.covariates().rows()}}},
                         {"estimates", estimates}});

    std::ofstream curve(out_dir / "qtt_curve.csv");
    curve << "tau,delta,ci_lower,ci_upper,unit\n";
    for (const auto& tr : results) {
      for (const auto& ur : tr.units) {
        if (!ur.estimate) continue;
        curve << num(tr.tau.value()) << ',' << num(ur.estimate->delta) << ','
              << (ur.bootstrap ? num(ur.bootstrap->ci_lower) : "") << ','
              << (ur.bootstrap ? num(ur.bootstrap->ci_upper) : "") << ',' << ur.label << '\n';
      }
    }

    std::ofstream pre(out_dir / "pretrend.csv");
    pre << "t,time,unit,y";
    for (const auto& tr : results) pre << ",q_" << num(tr.tau.value());
    pre << '\n';
    const auto& times = panel.time_labels();
    for (std::size_t u = 0; u < split.treated_ids.size(); ++u) {
      for (int t = 0; t < panel.periods(); ++t) {
        pre << t + 1 << ',' << (times.empty() ? std::to_string(t + 1) : times[static_cast<std::size_t>(t)]) << ','
            << results.front().units[u].label << ',' << num(split.treated(static_cast<Eigen::Index>(u), t));
        for (const auto& tr : results) {
          const auto& ur = tr.units[u];
          pre << ',' << (ur.estimate ? num(ur.path[t]) : "");
        }
        pre << '\n';
      }
    }
    timings.stop("write");
    timings.stop("total");

    std::vector<std::string> outputs{"estimates.json", "qtt_curve.csv", "pretrend.csv", "manifest.json"};
    if (failed) outputs.push_back("error.json");
    write_json_file(out_dir / "manifest.json", make_manifest("estimate", args, c.to_json(), timings, outputs));
    if (failed) {
      Json failures = Json::array();
      for (const auto& tr : results) {
        for (const auto& ur : tr.units) {
          if (!ur.error.empty()) failures.push_back(Json{{"tau", tr.tau.value()}, {"unit", ur.label}, {"message", ur.error}});
        }
      }
      Json e = error_json(kEstimationFailure, "estimation", "estimation failed for some quantiles or units");
      e["error"]["failures"] = failures;
      report_error(out_dir, err, e);
      return kEstimationFailure;
    }
    return kSuccess;
  });
}

}  // namespace qfmqtt::cli

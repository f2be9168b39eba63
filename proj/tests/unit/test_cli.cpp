#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qfmqtt/serialize.hpp"
#include "qfmqtt_cli/cli.hpp"

namespace fs = std::filesystem;
using qfmqtt::Json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = qfmqtt::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qfmqtt_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// Two controls proportional to one factor; the treated unit is 3 f_t + 1.5 d_t.
fs::path toy_panel(const fs::path& dir) {
  const double f[] = {1.0, -0.5, 2.0, 0.3, -1.2, 0.8, 1.5, -0.7};
  std::ofstream out(dir / "toy.csv");
  out << "time,A,B,Treated\n";
  for (int t = 0; t < 8; ++t) out << t + 1 << ',' << f[t] << ',' << 2 * f[t] << ',' << 3 * f[t] + (t >= 4 ? 1.5 : 0.0) << '\n';
  return dir / "toy.csv";
}

}  // namespace

TEST_CASE("estimate on a toy panel recovers the exact effect") {
  const fs::path dir = scratch("toy");
  const fs::path input = toy_panel(dir);
  const Run r = run({"estimate", "--input", input.string(), "--treated", "Treated", "--treatment-start", "5", "--tau",
                     "0.5", "--kmax", "1", "--boot-B", "0", "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const Json est = read_json(dir / "out" / "estimates.json");
  CHECK(est["panel"]["controls"] == 2);
  CHECK(est["panel"]["T0"] == 4);
  CHECK(est["estimates"][0]["units"][0]["estimate"]["delta"].get<double>() == doctest::Approx(1.5).epsilon(1e-9));
  const std::string curve = slurp(dir / "out" / "qtt_curve.csv");
  CHECK(curve.rfind("tau,delta,ci_lower,ci_upper,unit\n", 0) == 0);
  CHECK(count_lines(curve) == 2);
  const std::string pre = slurp(dir / "out" / "pretrend.csv");
  CHECK(pre.rfind("t,time,unit,y,q_0.5\n", 0) == 0);
  CHECK(count_lines(pre) == 9);
  const Json manifest = read_json(dir / "out" / "manifest.json");
  CHECK(manifest["command"] == "estimate");
  CHECK(manifest["config"]["kmax"] == 1);
  CHECK(manifest["versions"].contains("qfmqtt"));
  CHECK(manifest["timings_seconds"].contains("total"));
}

TEST_CASE("estimate writes bootstrap intervals and handles several treated units") {
  const fs::path dir = scratch("multi");
  std::ofstream csv(dir / "panel.csv");
  csv << "time,C1,C2,C3,C4,T1,T2\n";
  for (int t = 1; t <= 30; ++t) {
    const double f = std::sin(0.7 * t) + 0.1 * t;
    const double g = std::cos(1.3 * t);
    const double noise = 0.05 * std::sin(3.1 * t * t);
    csv << t << ',' << f + g << ',' << 2 * f - g << ',' << -f + 0.5 * g + noise << ',' << 0.5 * f + noise << ','
        << f + g + noise + (t > 20 ? 1.0 : 0.0) << ',' << 2 * f + (t > 20 ? -0.5 : 0.0) << '\n';
  }
  csv.close();
  const Run r = run({"estimate", "--input", (dir / "panel.csv").string(), "--treated", "T1,T2", "--treatment-start",
                     "21", "--tau", "0.25:0.75:0.25", "--kmax", "2", "--boot-B", "30", "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const std::string curve = slurp(dir / "out" / "qtt_curve.csv");
  CHECK(count_lines(curve) == 1 + 3 * 2);
  CHECK(curve.find(",,") == std::string::npos);
  const Json est = read_json(dir / "out" / "estimates.json");
  CHECK(est["estimates"].size() == 3);
  CHECK(est["estimates"][1]["units"][1]["label"] == "T2");
  CHECK(est["estimates"][1]["units"][0]["bootstrap"]["B"] == 30);
}

TEST_CASE("exit codes and error JSON") {
  const fs::path dir = scratch("errors");
  SUBCASE("bad path") {
    const Run r = run({"estimate", "--input", (dir / "missing.csv").string(), "--treated", "X", "--out",
                       (dir / "out").string()});
    CHECK(r.code == 2);
    CHECK(Json::parse(r.err)["error"]["kind"] == "input");
    CHECK(read_json(dir / "out" / "error.json")["error"]["code"] == 2);
  }
  SUBCASE("unknown family") {
    const Run r = run({"simulate", "--family", "spiky", "--out", (dir / "sim").string()});
    CHECK(r.code == 2);
    CHECK(Json::parse(r.err)["error"]["message"].get<std::string>().find("spiky") != std::string::npos);
  }
  SUBCASE("usage") {
    CHECK(run({}).code == 2);
    CHECK(run({"fit"}).code == 2);
    CHECK(run({"estimate", "--bogus"}).code == 2);
    CHECK(run({"estimate", "--out", (dir / "o").string()}).code == 2);
    CHECK(run({"estimate", "--help"}).code == 0);
    CHECK(run({"--help"}).code == 0);
  }
  SUBCASE("invalid quantile grid") {
    const fs::path input = toy_panel(dir);
    for (const std::string tau : {"0.5,0.25", "0,0.5", "0.1:0.9", "abc"}) {
      const Run r = run({"estimate", "--input", input.string(), "--treated", "Treated", "--treatment-start", "5",
                         "--tau", tau, "--out", (dir / "out").string()});
      CHECK(r.code == 2);
    }
  }
  SUBCASE("estimation failure") {
    // Controls move only with the treatment switch, so the factor spans the indicator.
    std::ofstream csv(dir / "flat.csv");
    csv << "time,A,B,Treated\n";
    for (int t = 1; t <= 8; ++t) {
      const double d = t > 4 ? 1.0 : 0.0;
      csv << t << ',' << d << ',' << 2 * d << ',' << 0.1 * t << '\n';
    }
    csv.close();
    const Run r = run({"estimate", "--input", (dir / "flat.csv").string(), "--treated", "Treated",
                       "--treatment-start", "5", "--tau", "0.5", "--kmax", "1", "--boot-B", "0", "--out",
                       (dir / "out").string()});
    CHECK(r.code == 1);
    const Json e = read_json(dir / "out" / "error.json");
    CHECK(e["error"]["kind"] == "estimation");
    CHECK(e["error"]["failures"].size() == 1);
    CHECK(fs::exists(dir / "out" / "estimates.json"));
  }
}

TEST_CASE("config file fills options and flags win") {
  const fs::path dir = scratch("config");
  const fs::path input = toy_panel(dir);
  std::ofstream cfg(dir / "run.json");
  cfg << Json{{"input", input.string()}, {"treated", {"Treated"}}, {"treatment_start", "5"}, {"tau", {0.25, 0.5}},
              {"kmax", 1}, {"boot_B", 0}, {"seed", 7}, {"out", (dir / "out").string()}}
             .dump();
  cfg.close();
  const Run r = run({"estimate", "--config", (dir / "run.json").string(), "--tau", "0.5"});
  REQUIRE(r.code == 0);
  const Json manifest = read_json(dir / "out" / "manifest.json");
  CHECK(manifest["config"]["tau"] == "0.5");
  CHECK(manifest["config"]["seed"] == 7);
  CHECK(manifest["seed"] == 7);
  CHECK(count_lines(slurp(dir / "out" / "qtt_curve.csv")) == 2);

  std::ofstream bad(dir / "bad.json");
  bad << R"({"kmaxx": 3})";
  bad.close();
  CHECK(run({"estimate", "--config", (dir / "bad.json").string()}).code == 2);
}

TEST_CASE("simulate smoke run") {
  const fs::path dir = scratch("simulate");
  const Run r = run({"simulate", "--family", "baseline", "--N", "50", "--T", "100", "--R", "50", "--boot-B", "0",
                     "--estimators", "NQTT,Oracle,GSCM", "--tau", "0.5", "--restarts", "1", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "report.csv");
  CHECK(count_lines(csv) == 4);
  CHECK(csv.find("NQTT,0.5,") != std::string::npos);
  CHECK(csv.find(",0,1\n") != std::string::npos);
  CHECK(count_lines(slurp(dir / "replicates.jsonl")) == 150);
  const Json report = read_json(dir / "report.json");
  CHECK(report["all_valid"] == true);
  CHECK(report["options"]["dgp"]["N"] == 50);
}

TEST_CASE("full scale applies to counts not given explicitly") {
  const fs::path dir = scratch("full");
  const Run r = run({"simulate", "--N", "20", "--T", "40", "--R", "2", "--estimators", "Oracle", "--tau", "0.5",
                     "--full-scale", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const Json manifest = read_json(dir / "manifest.json");
  CHECK(manifest["config"]["R"] == 2);
  CHECK(manifest["config"]["boot_B"] == 1000);
  CHECK(manifest["config"]["full_scale"] == true);
}

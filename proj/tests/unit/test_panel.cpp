#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <string>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/panel.hpp"

using namespace qfmqtt;
using Eigen::MatrixXd;

namespace {

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

bool contains(const std::string& text, const std::string& part) { return text.find(part) != std::string::npos; }

// 41 countries x 68 quarters with China as column 7.
std::string gdp_like_wide() {
  std::ostringstream out;
  out << "quarter";
  for (int i = 1; i <= 41; ++i) out << ',' << (i == 7 ? std::string("China") : "C" + std::to_string(i));
  out << '\n';
  for (int t = 1; t <= 68; ++t) {
    out << "q" << t;
    for (int i = 1; i <= 41; ++i) out << ',' << 0.01 * i + 0.001 * t * (i % 3);
    out << '\n';
  }
  return out.str();
}

PanelData small_panel() {
  MatrixXd Y(3, 5);
  Y << 1, 2, 3, 4, 5,
       6, 7, 8, 9, 10,
       11, 12, 13, 14, 15.5;
  return PanelData(Y, {2}, 4, {}, {"a", "b", "c"}, {"1", "2", "3", "4", "5"});
}

}  // namespace

TEST_CASE("wide file: one treated country among 41") {
  std::istringstream in(gdp_like_wide());
  PanelSchema schema;
  schema.treated_labels = {"China"};
  schema.treatment_start_time = "q41";
  const PanelData panel = read_panel(in, PanelFormat::wide_csv, schema);
  CHECK(panel.units() == 41);
  CHECK(panel.controls() == 40);
  CHECK(panel.periods() == 68);
  CHECK(panel.pre_periods() == 40);
  CHECK(panel.post_periods() == 28);
  CHECK(panel.treated_units() == std::vector<int>{7});
  CHECK(panel.unit_labels()[6] == "China");
  CHECK(panel.outcomes()(6, 0) == doctest::Approx(0.071));

  const SplitPanel split = split_control_treated(panel);
  CHECK(split.controls.rows() == 40);
  CHECK(split.controls.cols() == 68);
  CHECK(split.treated.rows() == 1);
  CHECK(split.treated.cols() == 68);
}

TEST_CASE("wide file requires the treated label and start time") {
  std::istringstream in(gdp_like_wide());
  CHECK_THROWS_AS(read_panel(in, PanelFormat::wide_csv), InputError);
}

TEST_CASE("long file with no treated unit is rejected") {
  std::ostringstream csv;
  csv << "unit,time,value,treated\n";
  for (int i = 1; i <= 3; ++i)
    for (int t = 1; t <= 4; ++t) csv << 'u' << i << ',' << t << ',' << i + t << ",0\n";
  std::istringstream in(csv.str());
  const std::string msg = message_of([&] { read_panel(in, PanelFormat::long_csv); });
  CHECK(contains(msg, "no treated unit"));
}

TEST_CASE("flag sequence 0,1,0 is non-monotone") {
  const std::string csv =
      "unit,time,value,treated\n"
      "a,1,1.0,0\na,2,2.0,1\na,3,3.0,0\n"
      "b,1,1.5,0\nb,2,2.5,0\nb,3,3.5,0\n";
  std::istringstream in(csv);
  CHECK(contains(message_of([&] { read_panel(in, PanelFormat::long_csv); }), "non-monotone treatment"));
  CHECK(contains(message_of([] { TreatmentIndicator::from_flags({0, 1, 0}); }), "non-monotone treatment"));
}

TEST_CASE("treatment indicator from flags and start") {
  const TreatmentIndicator a = TreatmentIndicator::from_flags({0, 0, 1, 1});
  CHECK(a.T0 == 2);
  CHECK(a.d == Eigen::Vector4d(0, 0, 1, 1));
  const TreatmentIndicator b = TreatmentIndicator::from_start(4, 3);
  CHECK(b.T0 == 2);
  CHECK(b.d == a.d);
  CHECK_THROWS_AS(TreatmentIndicator::from_flags({0, 0, 0}), InputError);
}

TEST_CASE("long file: duplicates and missing cells are located") {
  const std::string dup =
      "unit,time,value,treated\n"
      "a,1,1,0\na,1,2,0\n";
  std::istringstream in1(dup);
  CHECK(contains(message_of([&] { read_panel(in1, PanelFormat::long_csv); }), "duplicate (unit, time) = (a, 1)"));

  std::ostringstream csv;
  csv << "unit,time,value,treated\n";
  for (const char* u : {"a", "b", "c"})
    for (int t = 1; t <= 4; ++t) {
      if (std::string(u) == "b" && t == 3) continue;
      csv << u << ',' << t << ",1," << (std::string(u) == "a" && t > 2 ? 1 : 0) << '\n';
    }
  std::istringstream in2(csv.str());
  const std::string msg = message_of([&] { read_panel(in2, PanelFormat::long_csv); });
  CHECK(contains(msg, "unit 'b'"));
  CHECK(contains(msg, "time '3'"));
}

TEST_CASE("wide file: missing cell is rejected with its location") {
  const std::string csv = "time,a,b,c\n1,1,2,3\n2,1,NA,3\n3,1,2,3\n4,1,2,3\n";
  std::istringstream in(csv);
  PanelSchema schema;
  schema.treated_labels = {"a"};
  schema.treatment_start_time = "3";
  const std::string msg = message_of([&] { read_panel(in, PanelFormat::wide_csv, schema); });
  CHECK(contains(msg, "missing value"));
  CHECK(contains(msg, "line 3"));
}

TEST_CASE("wide and long files of the same data give identical panels") {
  const PanelData panel = small_panel();
  std::ostringstream wide, lng;
  write_panel_wide(wide, panel);
  write_panel_long(lng, panel);

  std::istringstream win(wide.str()), lin(lng.str());
  PanelSchema schema;
  schema.treated_labels = {"b"};
  schema.treatment_start_time = "4";
  const PanelData from_wide = read_panel(win, PanelFormat::wide_csv, schema);
  const PanelData from_long = read_panel(lin, PanelFormat::long_csv);
  CHECK(from_wide == panel);
  CHECK(from_long == panel);
  CHECK(from_wide == from_long);
}

TEST_CASE("load_panel reads files from disk") {
  const auto path = std::filesystem::temp_directory_path() / "qfmqtt_test_panel_long.csv";
  {
    std::ofstream out(path);
    write_panel_long(out, small_panel());
  }
  CHECK(load_panel(path, parse_panel_format("long")) == small_panel());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_panel(path, PanelFormat::long_csv), InputError);
  CHECK_THROWS_AS(parse_panel_format("xlsx"), InputError);
}

TEST_CASE("split and merge partition the units") {
  SUBCASE("three units, first treated") {
    const PanelData panel(MatrixXd::Random(3, 6), {1}, 4);
    const SplitPanel split = split_control_treated(panel);
    CHECK(split.controls.rows() == 2);
    CHECK(split.treated.rows() == 1);
    CHECK(split.control_ids == std::vector<int>{2, 3});
    CHECK(split.treated_ids == std::vector<int>{1});
    CHECK(merge_control_treated(split) == panel.outcomes());
  }
  SUBCASE("two treated units of five") {
    const PanelData panel(MatrixXd::Random(5, 8), {2, 5}, 5);
    const SplitPanel split = split_control_treated(panel);
    CHECK(split.controls.rows() == 3);
    CHECK(split.treated.rows() == 2);
    CHECK(split.control_ids == std::vector<int>{1, 3, 4});
    CHECK(split.treated.row(1) == panel.outcomes().row(4));
    CHECK(merge_control_treated(split) == panel.outcomes());
    CHECK(panel.control_units() == split.control_ids);
  }
}

TEST_CASE("panel invariants are enforced") {
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(3, 3), {1}, 2), InputError);
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(2, 5), {1}, 3), InputError);
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(4, 5), {}, 3), InputError);
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(4, 5), {1, 1}, 3), InputError);
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(4, 5), {5}, 3), InputError);
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(4, 5), {1}, 1), InputError);
  CHECK_THROWS_AS(PanelData(MatrixXd::Zero(4, 5), {1}, 6), InputError);
  MatrixXd bad = MatrixXd::Zero(4, 5);
  bad(2, 2) = std::nan("");
  CHECK_THROWS_AS(PanelData(bad, {1}, 3), InputError);
  const PanelData ok(MatrixXd::Zero(4, 5), {1}, 5);
  CHECK(ok.post_periods() == 1);
  CHECK(ok.unit_labels()[3] == "unit4");
}

TEST_CASE("covariates become extra rows of the first-stage block") {
  MatrixXd Y = MatrixXd::Random(4, 6);
  MatrixXd X = MatrixXd::Random(2, 6);
  const PanelData panel(Y, {1}, 4, X);
  const MatrixXd block = first_stage_block(panel);
  CHECK(block.rows() == 5);
  CHECK(block.topRows(3) == Y.bottomRows(3));
  CHECK(block.bottomRows(2) == X);
  CHECK(panel.covariate_labels() == std::vector<std::string>{"x1", "x2"});
  CHECK_THROWS_AS(PanelData(Y, {1}, 4, MatrixXd::Random(2, 5)), InputError);
}

TEST_CASE("wide covariate columns are read as covariates") {
  const std::string csv = "time,a,b,c,gdp\n1,1,2,3,9\n2,1,2,3,8\n3,1,2,3,7\n4,1,2,3,6\n";
  std::istringstream in(csv);
  PanelSchema schema;
  schema.treated_labels = {"a"};
  schema.treatment_start_time = "3";
  schema.covariate_labels = {"gdp"};
  const PanelData panel = read_panel(in, PanelFormat::wide_csv, schema);
  CHECK(panel.units() == 3);
  CHECK(panel.covariates().rows() == 1);
  CHECK(panel.covariates()(0, 3) == 6.0);
}

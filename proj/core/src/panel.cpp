#include "qfmqtt/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qfmqtt/errors.hpp"

namespace qfmqtt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TreatmentIndicator TreatmentIndicator::from_start(int periods, int treatment_start) {
  if (treatment_start < 2 || treatment_start > periods) {
    throw InputError("treatment start must leave at least one pre- and one post-treatment period");
  }
  TreatmentIndicator ind;
  ind.T0 = treatment_start - 1;
  ind.d = VectorXd::Zero(periods);
  ind.d.tail(periods - ind.T0).setOnes();
  return ind;
}

TreatmentIndicator TreatmentIndicator::from_flags(const std::vector<int>& flags) {
  int first_one = -1;
  for (std::size_t t = 0; t < flags.size(); ++t) {
    if (flags[t] != 0 && flags[t] != 1) throw InputError("treatment flags must be 0 or 1");
    if (flags[t] == 1 && first_one < 0) first_one = static_cast<int>(t);
    if (flags[t] == 0 && first_one >= 0) {
      throw InputError("non-monotone treatment: flag returns to 0 at period " + std::to_string(t + 1));
    }
  }
  if (first_one < 0) throw InputError("no treated unit: all treatment flags are zero");
  return from_start(static_cast<int>(flags.size()), first_one + 1);
}

namespace {

std::vector<std::string> default_labels(const char* prefix, Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

}  // namespace

PanelData::PanelData(MatrixXd outcomes, std::vector<int> treated_units, int treatment_start,
                     MatrixXd covariates, std::vector<std::string> unit_labels,
                     std::vector<std::string> time_labels, std::vector<std::string> covariate_labels)
    : outcomes_(std::move(outcomes)), treated_(std::move(treated_units)),
      treatment_start_(treatment_start), covariates_(std::move(covariates)),
      unit_labels_(std::move(unit_labels)), time_labels_(std::move(time_labels)),
      covariate_labels_(std::move(covariate_labels)) {
  const Index T = outcomes_.cols();
  if (T < 4) throw InputError("panel needs at least 4 periods (got " + std::to_string(T) + ")");
  if (!outcomes_.allFinite()) throw InputError("panel outcomes must be finite");
  std::sort(treated_.begin(), treated_.end());
  if (treated_.empty()) throw InputError("no treated unit");
  if (std::adjacent_find(treated_.begin(), treated_.end()) != treated_.end()) {
    throw InputError("treated unit listed twice");
  }
  if (treated_.front() < 1 || treated_.back() > outcomes_.rows()) {
    throw InputError("treated unit index out of range");
  }
  if (controls() < 2) throw InputError("panel needs at least 2 control units");
  if (treatment_start_ < 2 || treatment_start_ > T) {
    throw InputError("treatment start must satisfy 1 <= T0 < T");
  }
  if (covariates_.size() != 0) {
    if (covariates_.cols() != T) throw InputError("covariate series must span all periods");
    if (!covariates_.allFinite()) throw InputError("covariates must be finite");
  } else {
    covariates_.resize(0, T);
  }
  if (unit_labels_.empty()) unit_labels_ = default_labels("unit", outcomes_.rows());
  if (time_labels_.empty()) time_labels_ = default_labels("", T);
  if (covariate_labels_.empty()) covariate_labels_ = default_labels("x", covariates_.rows());
  if (static_cast<Index>(unit_labels_.size()) != outcomes_.rows() ||
      static_cast<Index>(time_labels_.size()) != T ||
      static_cast<Index>(covariate_labels_.size()) != covariates_.rows()) {
    throw InputError("label count does not match panel dimensions");
  }
}

bool PanelData::is_treated(int unit) const {
  return std::binary_search(treated_.begin(), treated_.end(), unit);
}

std::vector<int> PanelData::control_units() const {
  std::vector<int> out;
  for (int i = 1; i <= units(); ++i) {
    if (!is_treated(i)) out.push_back(i);
  }
  return out;
}

bool PanelData::operator==(const PanelData& o) const {
  return outcomes_ == o.outcomes_ && treated_ == o.treated_ && treatment_start_ == o.treatment_start_ &&
         covariates_.rows() == o.covariates_.rows() && covariates_ == o.covariates_ && unit_labels_ == o.unit_labels_ &&
         time_labels_ == o.time_labels_ && covariate_labels_ == o.covariate_labels_;
}

PanelFormat parse_panel_format(const std::string& text) {
  if (text == "wide" || text == "wide-csv") return PanelFormat::wide_csv;
  if (text == "long" || text == "long-csv") return PanelFormat::long_csv;
  throw InputError("unknown panel format '" + text + "' (expected wide-csv or long-csv)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cell += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
    } else {
      table.rows.push_back(std::move(cells));
      table.line_numbers.push_back(line_no);
    }
  }
  if (!have_header) throw InputError("panel file is empty");
  return table;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool is_missing_token(const std::string& s) {
  static const std::set<std::string> tokens{"", "NA", "na", "NaN", "nan", "null", "NULL", "."};
  return tokens.count(s) > 0;
}

double cell_value(const std::string& text, int line, std::size_t column, const std::string& unit,
                  const std::string& time) {
  const std::string where = " at line " + std::to_string(line) + ", column " + std::to_string(column + 1) +
                            " (unit '" + unit + "', time '" + time + "')";
  if (is_missing_token(text)) throw InputError("missing value" + where);
  const auto value = parse_number(text);
  if (!value) throw InputError("non-numeric value '" + text + "'" + where);
  return *value;
}

int index_of(const std::vector<std::string>& labels, const std::string& label, const char* what) {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw InputError(std::string("unknown ") + what + " '" + label + "'");
  return static_cast<int>(it - labels.begin());
}

PanelData read_wide(std::istream& in, const PanelSchema& schema) {
  const CsvTable table = read_csv(in);
  if (table.header.size() < 3) throw InputError("wide panel needs a time column and at least two units");
  if (schema.treated_labels.empty() || !schema.treatment_start_time) {
    throw InputError("wide panels need the treated unit label(s) and the treatment start time in the schema");
  }
  std::vector<std::string> labels(table.header.begin() + 1, table.header.end());
  {
    std::set<std::string> seen;
    for (const auto& l : labels) {
      if (!seen.insert(l).second) throw InputError("duplicate unit column '" + l + "'");
    }
  }
  std::vector<std::size_t> unit_cols, cov_cols;
  std::vector<std::string> unit_labels;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (std::find(schema.covariate_labels.begin(), schema.covariate_labels.end(), labels[c]) !=
        schema.covariate_labels.end()) {
      cov_cols.push_back(c);
    } else {
      unit_cols.push_back(c);
      unit_labels.push_back(labels[c]);
    }
  }
  for (const auto& cl : schema.covariate_labels) index_of(labels, cl, "covariate column");
  std::vector<std::string> cov_labels;
  for (std::size_t c : cov_cols) cov_labels.push_back(labels[c]);

  const Index T = static_cast<Index>(table.rows.size());
  MatrixXd Y(static_cast<Index>(unit_cols.size()), T);
  MatrixXd X(static_cast<Index>(cov_cols.size()), T);
  std::vector<std::string> times;
  std::set<std::string> seen_times;
  for (Index t = 0; t < T; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    const int line = table.line_numbers[static_cast<std::size_t>(t)];
    if (row.size() > table.header.size()) {
      throw InputError("too many cells at line " + std::to_string(line));
    }
    if (row.empty() || row[0].empty()) throw InputError("missing time label at line " + std::to_string(line));
    if (!seen_times.insert(row[0]).second) throw InputError("duplicate time '" + row[0] + "'");
    times.push_back(row[0]);
    auto cell = [&](std::size_t c) -> std::string { return c + 1 < row.size() ? row[c + 1] : std::string(); };
    for (std::size_t k = 0; k < unit_cols.size(); ++k) {
      Y(static_cast<Index>(k), t) = cell_value(cell(unit_cols[k]), line, unit_cols[k] + 1, labels[unit_cols[k]], row[0]);
    }
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      X(static_cast<Index>(k), t) = cell_value(cell(cov_cols[k]), line, cov_cols[k] + 1, labels[cov_cols[k]], row[0]);
    }
  }
  std::vector<int> treated;
  for (const auto& l : schema.treated_labels) treated.push_back(index_of(unit_labels, l, "treated unit") + 1);
  const int start = index_of(times, *schema.treatment_start_time, "treatment start time") + 1;
  if (cov_cols.empty()) X.resize(0, T);
  return PanelData(std::move(Y), std::move(treated), start, std::move(X), std::move(unit_labels),
                   std::move(times), std::move(cov_labels));
}

PanelData read_long(std::istream& in, const PanelSchema& schema) {
  const CsvTable table = read_csv(in);
  const std::vector<std::string> expected{"unit", "time", "value", "treated"};
  if (table.header != expected) throw InputError("long panel header must be unit,time,value,treated");

  std::vector<std::string> units, times;
  std::map<std::string, int> unit_index, time_index;
  for (const auto& row : table.rows) {
    if (row.size() != 4) continue;
    if (unit_index.emplace(row[0], static_cast<int>(units.size())).second) units.push_back(row[0]);
    if (time_index.emplace(row[1], static_cast<int>(times.size())).second) times.push_back(row[1]);
  }
  // Numeric time labels are ordered numerically, others by first appearance.
  const bool numeric_times =
      std::all_of(times.begin(), times.end(), [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric_times) {
    std::stable_sort(times.begin(), times.end(),
                     [](const std::string& a, const std::string& b) { return *parse_number(a) < *parse_number(b); });
    for (std::size_t k = 0; k < times.size(); ++k) time_index[times[k]] = static_cast<int>(k);
  }
  const Index N = static_cast<Index>(units.size()), T = static_cast<Index>(times.size());
  MatrixXd Y(N, T);
  std::vector<std::vector<int>> flags(units.size(), std::vector<int>(times.size(), -1));
  std::vector<std::vector<char>> filled(units.size(), std::vector<char>(times.size(), 0));
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    const int line = table.line_numbers[k];
    if (row.size() != 4) throw InputError("expected 4 cells at line " + std::to_string(line));
    const int i = unit_index.at(row[0]);
    const int t = time_index.at(row[1]);
    if (filled[i][t]) {
      throw InputError("duplicate (unit, time) = (" + row[0] + ", " + row[1] + ") at line " + std::to_string(line));
    }
    filled[i][t] = 1;
    Y(i, t) = cell_value(row[2], line, 2, row[0], row[1]);
    if (row[3] == "0") {
      flags[i][t] = 0;
    } else if (row[3] == "1") {
      flags[i][t] = 1;
    } else {
      throw InputError("treated flag must be 0 or 1 at line " + std::to_string(line));
    }
  }
  for (Index i = 0; i < N; ++i) {
    for (Index t = 0; t < T; ++t) {
      if (!filled[i][t]) {
        throw InputError("missing value for unit '" + units[i] + "' at time '" + times[t] + "'");
      }
    }
  }

  std::vector<int> treated;
  int start = 0;
  if (!schema.treated_labels.empty()) {
    if (!schema.treatment_start_time) throw InputError("schema names treated units but no treatment start time");
    for (const auto& l : schema.treated_labels) treated.push_back(index_of(units, l, "treated unit") + 1);
    start = index_of(times, *schema.treatment_start_time, "treatment start time") + 1;
  } else {
    for (Index i = 0; i < N; ++i) {
      const auto& f = flags[static_cast<std::size_t>(i)];
      if (std::all_of(f.begin(), f.end(), [](int v) { return v == 0; })) continue;
      TreatmentIndicator ind;
      try {
        ind = TreatmentIndicator::from_flags(f);
      } catch (const InputError& e) {
        throw InputError(std::string(e.what()) + " (unit '" + units[i] + "')");
      }
      if (start != 0 && ind.T0 + 1 != start) {
        throw InputError("treated units must share one treatment start (staggered adoption is unsupported)");
      }
      start = ind.T0 + 1;
      treated.push_back(static_cast<int>(i) + 1);
    }
    if (treated.empty()) throw InputError("no treated unit");
  }
  return PanelData(std::move(Y), std::move(treated), start, MatrixXd(0, T), std::move(units), std::move(times));
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

PanelData read_panel(std::istream& in, PanelFormat format, const PanelSchema& schema) {
  return format == PanelFormat::wide_csv ? read_wide(in, schema) : read_long(in, schema);
}

PanelData load_panel(const std::filesystem::path& path, PanelFormat format, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open panel file '" + path.string() + "'");
  return read_panel(in, format, schema);
}

void write_panel_wide(std::ostream& out, const PanelData& panel) {
  out << "time";
  for (const auto& l : panel.unit_labels()) out << ',' << csv_escape(l);
  for (const auto& l : panel.covariate_labels()) out << ',' << csv_escape(l);
  out << '\n';
  for (int t = 0; t < panel.periods(); ++t) {
    out << csv_escape(panel.time_labels()[t]);
    for (int i = 0; i < panel.units(); ++i) out << ',' << format_number(panel.outcomes()(i, t));
    for (Index k = 0; k < panel.covariates().rows(); ++k) out << ',' << format_number(panel.covariates()(k, t));
    out << '\n';
  }
}

void write_panel_long(std::ostream& out, const PanelData& panel) {
  if (panel.covariates().rows() != 0) throw InputError("long panel files cannot carry covariates");
  out << "unit,time,value,treated\n";
  for (int i = 0; i < panel.units(); ++i) {
    const bool treated = panel.is_treated(i + 1);
    for (int t = 0; t < panel.periods(); ++t) {
      out << csv_escape(panel.unit_labels()[i]) << ',' << csv_escape(panel.time_labels()[t]) << ','
          << format_number(panel.outcomes()(i, t)) << ',' << (treated && t + 1 >= panel.treatment_start() ? 1 : 0)
          << '\n';
    }
  }
}

SplitPanel split_control_treated(const PanelData& panel) {
  SplitPanel split;
  split.treated_ids = panel.treated_units();
  split.control_ids = panel.control_units();
  const Index T = panel.periods();
  split.controls.resize(static_cast<Index>(split.control_ids.size()), T);
  split.treated.resize(static_cast<Index>(split.treated_ids.size()), T);
  for (std::size_t k = 0; k < split.control_ids.size(); ++k) {
    split.controls.row(static_cast<Index>(k)) = panel.outcomes().row(split.control_ids[k] - 1);
  }
  for (std::size_t k = 0; k < split.treated_ids.size(); ++k) {
    split.treated.row(static_cast<Index>(k)) = panel.outcomes().row(split.treated_ids[k] - 1);
  }
  return split;
}

MatrixXd merge_control_treated(const SplitPanel& split) {
  MatrixXd out(split.controls.rows() + split.treated.rows(), split.controls.cols());
  for (std::size_t k = 0; k < split.control_ids.size(); ++k) {
    out.row(split.control_ids[k] - 1) = split.controls.row(static_cast<Index>(k));
  }
  for (std::size_t k = 0; k < split.treated_ids.size(); ++k) {
    out.row(split.treated_ids[k] - 1) = split.treated.row(static_cast<Index>(k));
  }
  return out;
}

MatrixXd first_stage_block(const PanelData& panel) {
  const SplitPanel split = split_control_treated(panel);
  MatrixXd out(split.controls.rows() + panel.covariates().rows(), panel.periods());
  out << split.controls, panel.covariates();
  return out;
}

}  // namespace qfmqtt

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qfmqtt {

/// Binary adoption series: 0 for t <= T0, 1 afterwards.
struct TreatmentIndicator {
  Eigen::VectorXd d;
  int T0 = 0;

  static TreatmentIndicator from_start(int periods, int treatment_start);
  /// Validate a 0/1 flag sequence; throws InputError unless it is monotone
  /// non-decreasing with at least one 1.
  static TreatmentIndicator from_flags(const std::vector<int>& flags);
};

/// Balanced panel with one or more treated units sharing a treatment start.
/// Unit and time indices exposed by this class are 1-based.
class PanelData {
public:
  /// outcomes: units x periods. treated_units: 1-based row indices.
  /// treatment_start: 1-based first treated period (T0 + 1).
  /// covariates: K x periods (may be empty).
  PanelData(Eigen::MatrixXd outcomes, std::vector<int> treated_units, int treatment_start,
            Eigen::MatrixXd covariates = {}, std::vector<std::string> unit_labels = {},
            std::vector<std::string> time_labels = {}, std::vector<std::string> covariate_labels = {});

  const Eigen::MatrixXd& outcomes() const noexcept { return outcomes_; }
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  const std::vector<int>& treated_units() const noexcept { return treated_; }
  const std::vector<std::string>& unit_labels() const noexcept { return unit_labels_; }
  const std::vector<std::string>& time_labels() const noexcept { return time_labels_; }
  const std::vector<std::string>& covariate_labels() const noexcept { return covariate_labels_; }

  int units() const noexcept { return static_cast<int>(outcomes_.rows()); }
  int periods() const noexcept { return static_cast<int>(outcomes_.cols()); }
  int controls() const noexcept { return units() - static_cast<int>(treated_.size()); }
  int treatment_start() const noexcept { return treatment_start_; }
  int pre_periods() const noexcept { return treatment_start_ - 1; }
  int post_periods() const noexcept { return periods() - pre_periods(); }
  bool is_treated(int unit) const;

  /// 1-based ids of the control units in row order.
  std::vector<int> control_units() const;
  TreatmentIndicator treatment() const { return TreatmentIndicator::from_start(periods(), treatment_start_); }

  bool operator==(const PanelData& other) const;

private:
  Eigen::MatrixXd outcomes_;
  std::vector<int> treated_;
  int treatment_start_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> unit_labels_;
  std::vector<std::string> time_labels_;
  std::vector<std::string> covariate_labels_;
};

enum class PanelFormat { wide_csv, long_csv };

/// Accepts "wide" / "wide-csv" / "long" / "long-csv".
PanelFormat parse_panel_format(const std::string& text);

/// Column mapping for panel files.
struct PanelSchema {
  /// Unit labels of the treated units. Required for wide files; for long files
  /// it overrides the treated flags when given.
  std::vector<std::string> treated_labels;
  /// Time label of the first treated period; required together with treated_labels.
  std::optional<std::string> treatment_start_time;
  /// Wide-file columns holding covariate series instead of units.
  std::vector<std::string> covariate_labels;
};

PanelData load_panel(const std::filesystem::path& path, PanelFormat format, const PanelSchema& schema = {});
PanelData read_panel(std::istream& in, PanelFormat format, const PanelSchema& schema = {});

void write_panel_wide(std::ostream& out, const PanelData& panel);
void write_panel_long(std::ostream& out, const PanelData& panel);

struct SplitPanel {
  Eigen::MatrixXd controls;  // N x T
  Eigen::MatrixXd treated;   // m x T
  std::vector<int> control_ids;
  std::vector<int> treated_ids;
};

SplitPanel split_control_treated(const PanelData& panel);

/// Inverse of split_control_treated.
Eigen::MatrixXd merge_control_treated(const SplitPanel& split);

/// Control outcomes with covariate series appended as extra rows; the block
/// used for first-stage factor estimation.
Eigen::MatrixXd first_stage_block(const PanelData& panel);

}  // namespace qfmqtt

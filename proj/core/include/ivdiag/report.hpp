#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivdiag/config.hpp"
#include "ivdiag/inference.hpp"
#include "ivdiag/iv.hpp"
#include "ivdiag/ltz.hpp"
#include "ivdiag/strength.hpp"

namespace ivdiag {

// A section that failed, carried in place of its content so partial reports
// stay useful.
struct SectionError {
  std::string type;
  std::string message;
};

SectionError describe_error(const std::exception& e);

// One requested inference method: either its result or why it failed.
struct MethodOutcome {
  std::string method;
  std::optional<InferenceResult> result;
  std::optional<SectionError> error;
};

struct DiagnosticsReport {
  std::string name;
  std::string design_tag;
  std::optional<bool> reported_f;
  Eigen::Index n = 0;
  long n_dropped = 0;
  int n_clusters = 0;

  std::optional<FitResult> ols, tsls, first_stage, reduced_form;
  std::optional<StrengthReport> strength;
  std::vector<MethodOutcome> inference;
  std::optional<DiscrepancyReport> discrepancy;
  std::optional<ZFSReport> zfs;
  std::map<std::string, SectionError> section_errors;  // keyed by section name

  nlohmann::ordered_json provenance;
};

// JSON encoding.  Every number is an IEEE double; infinities appear as the
// strings "inf"/"-inf" and NaN as null, so the files stay valid JSON and
// parse -> dump is idempotent.
nlohmann::ordered_json json_number(double x);
double number_from_json(const nlohmann::json& j);

nlohmann::ordered_json fit_to_json(const FitResult& fit);
nlohmann::ordered_json strength_to_json(const StrengthReport& s);
nlohmann::ordered_json inference_to_json(const InferenceResult& r);
nlohmann::ordered_json discrepancy_to_json(const DiscrepancyReport& d);
nlohmann::ordered_json zfs_to_json(const ZFSReport& z);
nlohmann::ordered_json report_to_json(const DiagnosticsReport& report);

// One horizontal row of the coefficient plot.
struct PlotRow {
  std::string label;
  std::string group;  // "ols" or "tsls"
  double point = 0.0;
  std::vector<std::pair<double, double>> intervals;
  std::string kind = "bounded";
};

// Pulls the plottable rows (point + interval set per estimator/method) back
// out of a serialized report.
std::vector<PlotRow> extract_plot_rows(const nlohmann::ordered_json& report);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace ivdiag

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivdiag/config.hpp"
#include "ivdiag/report.hpp"
#include "ivdiag/study.hpp"

namespace ivdiag {

// One panel of the cross-study summary table.  Shares are taken over the
// studies where the underlying quantity exists; NaN marks an empty cell.
struct BatchPanel {
  std::string group;  // "all", "experimental", "observational"
  int n_studies = 0;

  int n_with_f_metadata = 0;
  std::optional<double> share_f_unreported;  // populated only from user metadata

  int n_with_strength = 0;
  double share_effective_f_lt_10 = 0.0;
  double share_bootstrap_f_lt_10 = 0.0;
  double median_effective_f = 0.0;

  std::map<std::string, int> method_counts;            // studies where it ran
  std::map<std::string, double> share_p_gt_05;         // per method

  int n_with_discrepancy = 0;
  double share_same_sign = 0.0;
  double share_ratio_gt_1 = 0.0;
  double share_ratio_gt_5 = 0.0;
  double share_ratio_gt_10 = 0.0;
  double median_ratio = 0.0;
};

struct BatchSummary {
  std::vector<std::string> study_names;
  std::vector<BatchPanel> panels;
};

// Aggregates already-computed study reports.
BatchSummary summarize_reports(const std::vector<DiagnosticsReport>& reports);

// Runs every study config found in a directory (lexicographic *.json order),
// emits any per-study outputs they request, and aggregates the results.
// `tweak`, when given, edits each loaded config (CLI overrides).
BatchSummary batch_summarize_dir(const std::string& dir,
                                 const std::function<void(StudyConfig&)>& tweak = {});

nlohmann::ordered_json batch_to_json(const BatchSummary& summary);
std::string batch_to_csv(const BatchSummary& summary);

}  // namespace ivdiag

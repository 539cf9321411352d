#include "ivdiag/batch.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "ivdiag/errors.hpp"
#include "ivdiag/math.hpp"

namespace ivdiag {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double share(int hits, int total) {
  return total > 0 ? static_cast<double>(hits) / total : kNaN;
}

BatchPanel make_panel(const std::string& group,
                      const std::vector<const DiagnosticsReport*>& reports) {
  BatchPanel panel;
  panel.group = group;
  panel.n_studies = static_cast<int>(reports.size());

  int unreported = 0;
  int f_lt10 = 0, fboot_lt10 = 0;
  std::vector<double> eff_fs;
  int same_sign = 0, gt1 = 0, gt5 = 0, gt10 = 0;
  std::vector<double> ratios;
  std::map<std::string, int> p_gt;

  for (const auto* rep : reports) {
    if (rep->reported_f) {
      ++panel.n_with_f_metadata;
      if (!*rep->reported_f) ++unreported;
    }
    if (rep->strength) {
      ++panel.n_with_strength;
      eff_fs.push_back(rep->strength->f_effective);
      if (rep->strength->f_effective < 10.0) ++f_lt10;
      if (rep->strength->f_boot < 10.0) ++fboot_lt10;
    }
    for (const auto& m : rep->inference) {
      if (!m.result) continue;
      ++panel.method_counts[m.method];
      if (m.result->p_null > 0.05) ++p_gt[m.method];
    }
    if (rep->discrepancy) {
      ++panel.n_with_discrepancy;
      if (rep->discrepancy->same_sign) ++same_sign;
      const double r = rep->discrepancy->ratio_abs;
      if (std::isfinite(r)) {
        ratios.push_back(r);
        if (r > 1.0) ++gt1;
        if (r > 5.0) ++gt5;
        if (r > 10.0) ++gt10;
      }
    }
  }

  if (panel.n_with_f_metadata > 0) {
    panel.share_f_unreported = share(unreported, panel.n_with_f_metadata);
  }
  panel.share_effective_f_lt_10 = share(f_lt10, panel.n_with_strength);
  panel.share_bootstrap_f_lt_10 = share(fboot_lt10, panel.n_with_strength);
  panel.median_effective_f = eff_fs.empty() ? kNaN : stats::median(eff_fs);
  for (const auto& [method, count] : panel.method_counts) {
    panel.share_p_gt_05[method] = share(p_gt[method], count);
  }
  panel.share_same_sign = share(same_sign, panel.n_with_discrepancy);
  const int n_ratio = static_cast<int>(ratios.size());
  panel.share_ratio_gt_1 = share(gt1, n_ratio);
  panel.share_ratio_gt_5 = share(gt5, n_ratio);
  panel.share_ratio_gt_10 = share(gt10, n_ratio);
  panel.median_ratio = ratios.empty() ? kNaN : stats::median(ratios);
  return panel;
}

}  // namespace

BatchSummary summarize_reports(const std::vector<DiagnosticsReport>& reports) {
  if (reports.empty()) throw ConfigError("batch: no studies to summarize");
  BatchSummary summary;
  std::vector<const DiagnosticsReport*> all;
  std::map<std::string, std::vector<const DiagnosticsReport*>> by_tag;
  for (const auto& rep : reports) {
    summary.study_names.push_back(rep.name);
    all.push_back(&rep);
    if (!rep.design_tag.empty()) by_tag[rep.design_tag].push_back(&rep);
  }
  summary.panels.push_back(make_panel("all", all));
  for (const char* tag : {"experimental", "observational"}) {
    const auto it = by_tag.find(tag);
    if (it != by_tag.end()) summary.panels.push_back(make_panel(tag, it->second));
  }
  return summary;
}

BatchSummary batch_summarize_dir(const std::string& dir,
                                 const std::function<void(StudyConfig&)>& tweak) {
  if (!fs::is_directory(dir)) throw ConfigError("batch: " + dir + " is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ConfigError("batch: no study configs (*.json) in " + dir);

  std::vector<DiagnosticsReport> reports;
  reports.reserve(paths.size());
  for (const auto& path : paths) {
    StudyConfig cfg = load_study_config(path);
    if (tweak) {
      tweak(cfg);
      cfg.validate();
    }
    DiagnosticsReport rep = run_study(cfg);
    emit_outputs(rep, cfg);
    reports.push_back(std::move(rep));
  }
  return summarize_reports(reports);
}

ordered_json batch_to_json(const BatchSummary& summary) {
  ordered_json j;
  j["schema"] = "ivdiag/batch/1";
  j["studies"] = summary.study_names;
  ordered_json panels = ordered_json::array();
  for (const auto& p : summary.panels) {
    ordered_json pj;
    pj["group"] = p.group;
    pj["n_studies"] = p.n_studies;
    pj["n_with_f_metadata"] = p.n_with_f_metadata;
    pj["share_f_unreported"] =
        p.share_f_unreported ? json_number(*p.share_f_unreported) : ordered_json(nullptr);
    pj["n_with_strength"] = p.n_with_strength;
    pj["share_effective_f_lt_10"] = json_number(p.share_effective_f_lt_10);
    pj["share_bootstrap_f_lt_10"] = json_number(p.share_bootstrap_f_lt_10);
    pj["median_effective_f"] = json_number(p.median_effective_f);
    ordered_json methods;
    for (const auto& [name, count] : p.method_counts) {
      methods[name] = ordered_json{{"n", count},
                                   {"share_p_gt_05", json_number(p.share_p_gt_05.at(name))}};
    }
    pj["methods"] = std::move(methods);
    pj["n_with_discrepancy"] = p.n_with_discrepancy;
    pj["share_same_sign"] = json_number(p.share_same_sign);
    pj["share_ratio_gt_1"] = json_number(p.share_ratio_gt_1);
    pj["share_ratio_gt_5"] = json_number(p.share_ratio_gt_5);
    pj["share_ratio_gt_10"] = json_number(p.share_ratio_gt_10);
    pj["median_ratio"] = json_number(p.median_ratio);
    panels.push_back(std::move(pj));
  }
  j["panels"] = std::move(panels);
  return j;
}

std::string batch_to_csv(const BatchSummary& summary) {
  std::ostringstream out;
  out << "group,metric,value\n";
  const auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& p : summary.panels) {
    const auto row = [&](const std::string& metric, const std::string& value) {
      out << csv_escape(p.group) << "," << csv_escape(metric) << "," << value << "\n";
    };
    row("n_studies", std::to_string(p.n_studies));
    row("share_f_unreported", p.share_f_unreported ? num(*p.share_f_unreported) : "");
    row("share_effective_f_lt_10", num(p.share_effective_f_lt_10));
    row("share_bootstrap_f_lt_10", num(p.share_bootstrap_f_lt_10));
    row("median_effective_f", num(p.median_effective_f));
    for (const auto& [name, share_val] : p.share_p_gt_05) {
      row("share_p_gt_05_" + name, num(share_val));
    }
    row("share_same_sign", num(p.share_same_sign));
    row("share_ratio_gt_1", num(p.share_ratio_gt_1));
    row("share_ratio_gt_5", num(p.share_ratio_gt_5));
    row("share_ratio_gt_10", num(p.share_ratio_gt_10));
    row("median_ratio", num(p.median_ratio));
  }
  return out.str();
}

}  // namespace ivdiag

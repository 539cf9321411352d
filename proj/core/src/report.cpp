#include "ivdiag/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <typeinfo>

#include "ivdiag/errors.hpp"
#include "ivdiag/version.hpp"

namespace ivdiag {

using nlohmann::ordered_json;

SectionError describe_error(const std::exception& e) {
  SectionError out;
  out.message = e.what();
  if (dynamic_cast<const UnsupportedAlphaError*>(&e)) out.type = "unsupported_alpha";
  else if (dynamic_cast<const PreconditionError*>(&e)) out.type = "precondition";
  else if (dynamic_cast<const ConfigError*>(&e)) out.type = "config";
  else if (dynamic_cast<const ParseError*>(&e)) out.type = "parse";
  else if (dynamic_cast<const IOError*>(&e)) out.type = "io";
  else if (dynamic_cast<const CollinearityError*>(&e)) out.type = "collinearity";
  else if (dynamic_cast<const DegreesOfFreedomError*>(&e)) out.type = "degrees_of_freedom";
  else if (dynamic_cast<const ClusterCountError*>(&e)) out.type = "cluster_count";
  else if (dynamic_cast<const SingularVCovError*>(&e)) out.type = "singular_vcov";
  else if (dynamic_cast<const DegenerateFirstStageError*>(&e)) out.type = "degenerate_first_stage";
  else if (dynamic_cast<const BootstrapInstabilityError*>(&e)) out.type = "bootstrap_instability";
  else if (dynamic_cast<const NumericalError*>(&e)) out.type = "numerical";
  else out.type = "internal";
  return out;
}

ordered_json json_number(double x) {
  if (std::isnan(x)) return nullptr;
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("expected a number, null, or \"inf\"/\"-inf\", got \"" + s + "\"");
  }
  if (!j.is_number()) throw ParseError("expected a numeric JSON value");
  return j.get<double>();
}

namespace {

ordered_json vector_to_json(const Eigen::VectorXd& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(json_number(v[i]));
  return arr;
}

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(json_number(m(r, c)));
    arr.push_back(std::move(row));
  }
  return arr;
}

ordered_json error_to_json(const SectionError& e) {
  return ordered_json{{"error", ordered_json{{"type", e.type}, {"message", e.message}}}};
}

}  // namespace

ordered_json fit_to_json(const FitResult& fit) {
  ordered_json j;
  j["terms"] = fit.terms;
  j["coef"] = vector_to_json(fit.coef);
  j["se"] = vector_to_json(fit.se);
  j["tstat"] = vector_to_json(fit.tstat);
  j["pvalue"] = vector_to_json(fit.pvalue);
  j["ci_low"] = vector_to_json(fit.ci_low);
  j["ci_high"] = vector_to_json(fit.ci_high);
  j["vcov"] = matrix_to_json(fit.vcov);
  j["n"] = static_cast<std::int64_t>(fit.n);
  j["df_residual"] = static_cast<std::int64_t>(fit.df_residual);
  j["sigma2_hat"] = json_number(fit.sigma2_hat);
  j["alpha"] = fit.alpha;
  j["vcov_flavor"] = to_string(fit.flavor);
  if (fit.flavor == VCovFlavor::bootstrap) {
    j["boot_kept"] = fit.boot_kept;
    j["boot_dropped"] = fit.boot_dropped;
  }
  return j;
}

ordered_json strength_to_json(const StrengthReport& s) {
  ordered_json j;
  j["p_z"] = s.p_z;
  j["f_classic"] = json_number(s.f_classic);
  j["f_robust"] = json_number(s.f_robust);
  j["f_cluster"] = s.f_cluster ? json_number(*s.f_cluster) : ordered_json(nullptr);
  j["f_effective"] = json_number(s.f_effective);
  j["f_bootstrap"] = json_number(s.f_boot);
  j["f_bootstrap_tau"] = json_number(s.f_boot_tau);
  j["bootstrap_degenerate"] = s.boot_degenerate;
  j["bootstrap_reps"] = s.boot_reps;
  j["bootstrap_kept"] = s.boot_kept;
  j["bootstrap_dropped"] = s.boot_dropped;
  j["rho_d_dhat"] = json_number(s.rho_d_dhat);
  j["partial_r2"] = json_number(s.partial_r2);
  j["passes_rule_of_thumb"] = s.passes_rule_of_thumb;
  return j;
}

ordered_json inference_to_json(const InferenceResult& r) {
  ordered_json j;
  j["method"] = r.method;
  j["point"] = json_number(r.point);
  ordered_json ci;
  ci["kind"] = to_string(r.ci.kind);
  ordered_json pieces = ordered_json::array();
  for (const auto& [lo, hi] : r.ci.intervals) {
    pieces.push_back(ordered_json::array({json_number(lo), json_number(hi)}));
  }
  ci["intervals"] = std::move(pieces);
  j["ci"] = std::move(ci);
  j["p_null"] = json_number(r.p_null);
  j["alpha"] = r.alpha;
  if (!r.meta.empty()) {
    ordered_json meta;
    for (const auto& [k, v] : r.meta) meta[k] = json_number(v);
    j["meta"] = std::move(meta);
  }
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

ordered_json discrepancy_to_json(const DiscrepancyReport& d) {
  ordered_json j;
  j["tau_2sls"] = json_number(d.tau_2sls);
  j["tau_ols"] = json_number(d.tau_ols);
  j["se_2sls"] = json_number(d.se_2sls);
  j["se_ols"] = json_number(d.se_ols);
  j["ratio_abs"] = json_number(d.ratio_abs);
  j["se_ratio"] = json_number(d.se_ratio);
  j["same_sign"] = d.same_sign;
  j["ols_zero"] = d.ols_zero;
  return j;
}

ordered_json zfs_to_json(const ZFSReport& z) {
  ordered_json j;
  j["reduced_form"] = fit_to_json(z.reduced_form);
  j["first_stage"] = fit_to_json(z.first_stage);
  j["first_stage_f"] = json_number(z.first_stage_f);
  j["n_subsample"] = static_cast<std::int64_t>(z.n_subsample);
  j["n_total"] = static_cast<std::int64_t>(z.n_total);
  return j;
}

ordered_json report_to_json(const DiagnosticsReport& report) {
  ordered_json j;
  j["schema"] = kReportSchema;
  j["name"] = report.name;
  if (!report.design_tag.empty()) j["design"] = report.design_tag;
  if (report.reported_f) j["reported_f"] = *report.reported_f;
  j["data"] = ordered_json{{"n", static_cast<std::int64_t>(report.n)},
                           {"n_dropped", report.n_dropped},
                           {"n_clusters", report.n_clusters}};

  const auto emit = [&](const char* key, const auto& opt, auto&& to_json) {
    const auto it = report.section_errors.find(key);
    if (it != report.section_errors.end()) {
      j[key] = error_to_json(it->second);
    } else if (opt) {
      j[key] = to_json(*opt);
    }
  };
  emit("ols", report.ols, [](const FitResult& f) { return fit_to_json(f); });
  emit("tsls", report.tsls, [](const FitResult& f) { return fit_to_json(f); });
  emit("first_stage", report.first_stage, [](const FitResult& f) { return fit_to_json(f); });
  emit("reduced_form", report.reduced_form, [](const FitResult& f) { return fit_to_json(f); });
  emit("strength", report.strength, [](const StrengthReport& s) { return strength_to_json(s); });

  ordered_json methods = ordered_json::array();
  for (const auto& m : report.inference) {
    if (m.error) {
      ordered_json e = error_to_json(*m.error);
      e["method"] = m.method;
      methods.push_back(std::move(e));
    } else if (m.result) {
      methods.push_back(inference_to_json(*m.result));
    }
  }
  j["inference"] = std::move(methods);

  emit("discrepancy", report.discrepancy,
       [](const DiscrepancyReport& d) { return discrepancy_to_json(d); });
  emit("zfs", report.zfs, [](const ZFSReport& z) { return zfs_to_json(z); });

  j["provenance"] = report.provenance;
  return j;
}

std::vector<PlotRow> extract_plot_rows(const ordered_json& report) {
  std::vector<PlotRow> rows;
  const auto fit_row = [&](const nlohmann::json& fit, const std::string& label,
                           const std::string& group) -> std::optional<PlotRow> {
    if (!fit.is_object() || fit.contains("error")) return std::nullopt;
    // The row tracks the treatment coefficient: the first term that is not
    // the intercept the design prepends.
    std::size_t idx = 0;
    if (fit.contains("terms")) {
      const auto& terms = fit.at("terms");
      for (std::size_t j = 0; j < terms.size(); ++j) {
        if (terms.at(j).get<std::string>() != "(intercept)") {
          idx = j;
          break;
        }
      }
    }
    PlotRow row;
    row.label = label;
    row.group = group;
    row.point = number_from_json(fit.at("coef").at(idx));
    row.intervals.emplace_back(number_from_json(fit.at("ci_low").at(idx)),
                               number_from_json(fit.at("ci_high").at(idx)));
    return row;
  };
  if (report.contains("ols")) {
    if (auto row = fit_row(report.at("ols"), "analytic", "ols")) rows.push_back(std::move(*row));
  }
  if (report.contains("inference")) {
    for (const auto& m : report.at("inference")) {
      if (!m.is_object() || m.contains("error")) continue;
      PlotRow row;
      row.label = m.value("method", "?");
      row.group = "tsls";
      row.point = number_from_json(m.at("point"));
      row.kind = m.at("ci").value("kind", "bounded");
      for (const auto& piece : m.at("ci").at("intervals")) {
        row.intervals.emplace_back(number_from_json(piece.at(0)), number_from_json(piece.at(1)));
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IOError("failed while writing " + path);
}

}  // namespace ivdiag

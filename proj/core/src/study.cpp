#include "ivdiag/study.hpp"

#include <utility>

#include "ivdiag/errors.hpp"
#include "ivdiag/svg.hpp"
#include "ivdiag/version.hpp"

namespace ivdiag {

using nlohmann::ordered_json;

namespace {

// Runs one section, recording a failure instead of propagating it.
template <typename Fn>
void guarded(DiagnosticsReport& report, const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report.section_errors[section] = describe_error(e);
  }
}

FitOptions study_fit_options(const StudyConfig& cfg) {
  FitOptions opts;
  opts.flavor = cfg.flavor;
  opts.alpha = cfg.alpha;
  opts.boot_reps = cfg.bootstrap_reps;
  opts.seed = cfg.seed;
  opts.threads = cfg.threads;
  return opts;
}

// The uninstrumented benchmark: outcome on treatment plus the same covariate
// block the instrumented fit absorbs.
FitResult fit_plain_ols(const IVModel& model, const FitOptions& opts) {
  Eigen::MatrixXd X(model.n(), 1 + model.covariates.cols());
  X.col(0) = model.d;
  if (model.covariates.cols() > 0) X.rightCols(model.covariates.cols()) = model.covariates;
  FitOptions ols_opts = opts;
  ols_opts.add_intercept = model.add_intercept;
  ols_opts.clusters = model.clusters.empty() ? nullptr : &model.clusters;
  ols_opts.term_names.clear();
  ols_opts.term_names.push_back(model.treatment_name);
  for (const auto& name : model.covariate_names) ols_opts.term_names.push_back(name);
  if (ols_opts.flavor == VCovFlavor::bootstrap) {
    ols_opts.flavor = model.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1;
  }
  return ols_fit(model.y, X, ols_opts);
}

}  // namespace

DiagnosticsReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  DiagnosticsReport report;
  report.name = cfg.name;
  report.design_tag = cfg.design_tag;
  report.reported_f = cfg.reported_f;

  const Dataset data = load_dataset(cfg.data_path, cfg.roles);
  validate_dataset(data);
  report.n = data.n_rows();
  report.n_dropped = data.n_dropped;
  report.n_clusters = data.n_clusters();

  const IVModel model = IVModel::from_dataset(data);
  const FitOptions opts = study_fit_options(cfg);

  FitOptions analytic_opts = opts;  // component fits never use the bootstrap flavor
  if (analytic_opts.flavor == VCovFlavor::bootstrap) {
    analytic_opts.flavor = model.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1;
  }

  guarded(report, "ols", [&] { report.ols = fit_plain_ols(model, opts); });
  guarded(report, "tsls", [&] { report.tsls = tsls_fit(model, opts); });
  guarded(report, "first_stage", [&] {
    auto [first, reduced] = component_fits(model, analytic_opts);
    report.first_stage = std::move(first);
    report.reduced_form = std::move(reduced);
  });
  if (report.section_errors.count("first_stage")) {
    report.section_errors["reduced_form"] = report.section_errors["first_stage"];
  }
  guarded(report, "strength", [&] { report.strength = strength_report(model, opts); });
  guarded(report, "discrepancy", [&] { report.discrepancy = discrepancy(model, opts); });
  if (cfg.roles.zfs_flag) {
    guarded(report, "zfs", [&] {
      const Eigen::VectorXd& flag = data.col(*cfg.roles.zfs_flag);
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < flag.size(); ++i) {
        if (flag[i] == 1.0) rows.push_back(i);
      }
      report.zfs = zfs_placebo(model, rows, analytic_opts);
    });
  }

  std::optional<BootstrapInference> boot;
  const auto boot_once = [&]() -> BootstrapInference& {
    if (!boot) boot = bootstrap_infer(model, opts);
    return *boot;
  };
  for (const Method m : cfg.methods) {
    MethodOutcome out;
    out.method = to_string(m);
    try {
      switch (m) {
        case Method::analytic:
          out.result = analytic_inference(model, analytic_opts);
          break;
        case Method::bootstrap_c:
          out.result = boot_once().percentile;
          break;
        case Method::bootstrap_t:
          out.result = boot_once().studentized;
          break;
        case Method::ar: {
          ARSetOptions set_opts;
          set_opts.alpha = cfg.alpha;
          out.result = ar_confidence_set(model, analytic_opts, set_opts);
          break;
        }
        case Method::tf: {
          if (!report.tsls) throw PreconditionError("tf needs the instrumented fit");
          if (!report.first_stage) throw PreconditionError("tf needs the first-stage fit");
          const double f_first = partial_f(*report.first_stage);
          out.result =
              tf_adjust(report.tsls->coef[0], report.tsls->se[0], f_first, cfg.alpha);
          break;
        }
      }
    } catch (const std::exception& e) {
      out.result.reset();
      out.error = describe_error(e);
    }
    report.inference.push_back(std::move(out));
  }

  if (cfg.ltz) {
    MethodOutcome out;
    out.method = "ltz";
    try {
      LTZPrior prior;
      if (cfg.ltz->from_zfs) {
        if (!report.zfs) {
          throw PreconditionError("ltz.from_zfs needs a successful placebo section");
        }
        prior = report.zfs->as_prior();
      } else {
        prior.mu = cfg.ltz->mu;
        prior.omega = cfg.ltz->omega;
      }
      out.result = ltz_adjust(model, prior, analytic_opts);
    } catch (const std::exception& e) {
      out.result.reset();
      out.error = describe_error(e);
    }
    report.inference.push_back(std::move(out));
  }

  report.provenance = ordered_json{{"config", config_to_json(cfg)},
                                   {"engine_version", kVersion},
                                   {"seed", cfg.seed}};
  return report;
}

std::string report_json_text(const DiagnosticsReport& report) {
  return report_to_json(report).dump(2) + "\n";
}

void emit_outputs(const DiagnosticsReport& report, const StudyConfig& cfg) {
  const ordered_json j = report_to_json(report);
  if (!cfg.out_json.empty()) write_text_file(cfg.out_json, j.dump(2) + "\n");
  if (!cfg.out_svg.empty() || !cfg.out_csv.empty()) {
    const auto rows = extract_plot_rows(j);
    if (!cfg.out_svg.empty()) {
      write_text_file(cfg.out_svg, render_coefficient_plot(rows, report.name));
    }
    if (!cfg.out_csv.empty()) write_text_file(cfg.out_csv, plot_rows_csv(rows));
  }
}

}  // namespace ivdiag

// Batch front end: single-study reports, directory summaries, Monte-Carlo
// checks, and re-plotting of saved reports.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ivdiag/batch.hpp"
#include "ivdiag/errors.hpp"
#include "ivdiag/report.hpp"
#include "ivdiag/simulate.hpp"
#include "ivdiag/study.hpp"
#include "ivdiag/svg.hpp"
#include "ivdiag/version.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ivdiag;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IOError*>(&e)) return 2;
  return 1;  // config errors and anything unexpected
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<double> alpha;
  std::optional<int> threads;
  std::string format = "json";
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override the seed");
  cmd->add_option("--reps", ov.reps, "Override the replication count");
  cmd->add_option("--alpha", ov.alpha, "Override the test level");
  cmd->add_option("--threads", ov.threads, "Override the worker count");
  cmd->add_option("--format", ov.format, "Output format")
      ->check(CLI::IsMember({"json", "csv"}));
}

void apply(const Overrides& ov, StudyConfig& cfg) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.reps) cfg.bootstrap_reps = *ov.reps;
  if (ov.alpha) cfg.alpha = *ov.alpha;
  if (ov.threads) cfg.threads = *ov.threads;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  StudyConfig cfg = load_study_config(config_path);
  apply(ov, cfg);
  cfg.validate();
  const DiagnosticsReport report = run_study(cfg);
  emit_outputs(report, cfg);
  if (ov.format == "csv") {
    const auto rows = extract_plot_rows(report_to_json(report));
    std::cout << plot_rows_csv(rows);
  } else {
    std::cout << report_json_text(report);
  }
  return 0;
}

int cmd_batch(const std::string& dir, const Overrides& ov, const std::string& out_path) {
  const BatchSummary summary =
      batch_summarize_dir(dir, [&](StudyConfig& cfg) { apply(ov, cfg); });
  const std::string text =
      ov.format == "csv" ? batch_to_csv(summary) : batch_to_json(summary).dump(2) + "\n";
  write_or_print(out_path, text);
  return 0;
}

int cmd_simulate(const std::string& spec_path, const Overrides& ov,
                 const std::string& out_path) {
  SimSpec spec = load_sim_spec(spec_path);
  if (ov.seed) spec.seed = *ov.seed;
  if (ov.reps) spec.reps = *ov.reps;
  if (ov.alpha) spec.alpha = *ov.alpha;
  if (ov.threads) spec.threads = *ov.threads;
  spec.validate();
  const SimSummary summary = monte_carlo(spec);
  const std::string text = ov.format == "csv" ? sim_to_csv(spec, summary)
                                              : sim_to_json(spec, summary).dump(2) + "\n";
  write_or_print(out_path, text);
  return 0;
}

int cmd_plot(const std::string& report_path, std::string svg_path, std::string csv_path) {
  std::ifstream in(report_path, std::ios::binary);
  if (!in) throw IOError("cannot open " + report_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ParseError(report_path + ": invalid JSON");
  const auto rows = extract_plot_rows(j);
  if (svg_path.empty() && csv_path.empty()) {
    svg_path = fs::path(report_path).replace_extension(".svg").string();
  }
  const std::string title = j.value("name", fs::path(report_path).stem().string());
  if (!svg_path.empty()) write_text_file(svg_path, render_coefficient_plot(rows, title));
  if (!csv_path.empty()) write_text_file(csv_path, plot_rows_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrumented-regression estimation and diagnostics"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, dir_path, spec_path, report_path;
  std::string out_path, svg_path, csv_path;
  Overrides run_ov, batch_ov, sim_ov;

  auto* run = app.add_subcommand("run", "Run one study config and emit its report");
  run->add_option("--config", config_path, "Study config (JSON)")->required();
  add_override_flags(run, run_ov);

  auto* batch = app.add_subcommand("batch", "Summarize every study config in a directory");
  batch->add_option("--dir", dir_path, "Directory of study configs")->required();
  batch->add_option("--out", out_path, "Write the summary here instead of stdout");
  add_override_flags(batch, batch_ov);

  auto* sim = app.add_subcommand("simulate", "Run the Monte-Carlo laboratory");
  sim->add_option("--spec", spec_path, "Simulation spec (JSON)")->required();
  sim->add_option("--out", out_path, "Write the summary here instead of stdout");
  add_override_flags(sim, sim_ov);

  auto* plot = app.add_subcommand("plot", "Render the coefficient plot from a saved report");
  plot->add_option("--report", report_path, "Report JSON produced by `run`")->required();
  plot->add_option("--svg", svg_path, "SVG output path (default: report path with .svg)");
  plot->add_option("--csv", csv_path, "Also write the plotted numbers as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, run_ov);
    if (batch->parsed()) return cmd_batch(dir_path, batch_ov, out_path);
    if (sim->parsed()) return cmd_simulate(spec_path, sim_ov, out_path);
    if (plot->parsed()) return cmd_plot(report_path, svg_path, csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}

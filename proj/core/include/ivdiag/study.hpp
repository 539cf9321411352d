#pragma once

#include "ivdiag/config.hpp"
#include "ivdiag/report.hpp"

namespace ivdiag {

// Full single-study pipeline: load the data, fit OLS and the instrumented
// model, compute the strength battery, run every requested inference method,
// and assemble the report.  Section failures are recorded in place; only
// data-loading and config problems propagate as exceptions.
DiagnosticsReport run_study(const StudyConfig& cfg);

// Writes whichever of the JSON / SVG / CSV outputs the config asks for.
void emit_outputs(const DiagnosticsReport& report, const StudyConfig& cfg);

// Serialized report plus helpers shared by the CLI.
std::string report_json_text(const DiagnosticsReport& report);

}  // namespace ivdiag

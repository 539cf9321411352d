#pragma once

namespace ivdiag {

inline constexpr const char* kVersion = "1.0.0";

// Identifier stamped into every emitted report.
inline constexpr const char* kReportSchema = "ivdiag/1";

}  // namespace ivdiag

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ivdiag/dataset.hpp"
#include "ivdiag/regression.hpp"

namespace ivdiag {

// Inference methods a study can request.
enum class Method { analytic, bootstrap_c, bootstrap_t, ar, tf };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Optional debiasing prior carried in a study config: either explicit numbers
// or wired from the placebo subsample fit.
struct LTZConfig {
  bool from_zfs = false;
  Eigen::VectorXd mu;     // ignored when from_zfs
  Eigen::MatrixXd omega;  // ignored when from_zfs
};

struct StudyConfig {
  std::string name;
  std::string data_path;
  ColumnRoles roles;
  VCovFlavor flavor = VCovFlavor::hc1;
  double alpha = 0.05;
  int bootstrap_reps = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<Method> methods = {Method::analytic};
  std::string design_tag;  // "experimental", "observational", or empty
  std::optional<bool> reported_f;  // study-level metadata, user-supplied
  std::optional<LTZConfig> ltz;
  std::string out_json;
  std::string out_svg;
  std::string out_csv;

  void validate() const;
};

// Parse a study config from JSON text; `origin` names the source in errors and
// anchors relative paths (data/output) at its directory.
StudyConfig parse_study_config(const std::string& json_text, const std::string& origin);
StudyConfig load_study_config(const std::string& path);

// Canonical JSON echo of a config, used for report provenance.
nlohmann::ordered_json config_to_json(const StudyConfig& cfg);

// Monte-Carlo design: joint-normal draws for (instruments, outcome shock,
// treatment shock) with optional cluster-level mixing, mapped through a linear
// first stage and outcome equation.
struct SimSpec {
  Eigen::Index n = 1000;
  int p_z = 1;
  double pi = 1.0;        // first-stage slope on the combined instrument
  double rho_de = 0.0;    // corr(treatment shock, outcome shock)
  double rho_ze = 0.0;    // corr(first instrument, outcome shock)
  int cluster_count = 0;  // 0 disables clustering
  double within_corr = 0.0;
  double tau_true = 0.0;
  int reps = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  double alpha = 0.05;
  VCovFlavor flavor = VCovFlavor::hc1;
  int bootstrap_reps = 400;
  std::vector<Method> methods = {Method::analytic, Method::ar};

  void validate() const;
  Eigen::MatrixXd correlation_matrix() const;  // (p_z + 2) square
};

SimSpec parse_sim_spec(const std::string& json_text, const std::string& origin);
SimSpec load_sim_spec(const std::string& path);

}  // namespace ivdiag

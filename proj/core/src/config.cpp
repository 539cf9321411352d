#include "ivdiag/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ivdiag/errors.hpp"

namespace ivdiag {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string to_string(Method m) {
  switch (m) {
    case Method::analytic: return "analytic";
    case Method::bootstrap_c: return "bootstrap_c";
    case Method::bootstrap_t: return "bootstrap_t";
    case Method::ar: return "ar";
    case Method::tf: return "tf";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "analytic") return Method::analytic;
  if (s == "bootstrap_c") return Method::bootstrap_c;
  if (s == "bootstrap_t") return Method::bootstrap_t;
  if (s == "ar") return Method::ar;
  if (s == "tf") return Method::tf;
  throw ConfigError("unknown method '" + s +
                    "' (expected analytic, bootstrap_c, bootstrap_t, ar, or tf)");
}

namespace {

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
  throw ConfigError(origin + ": " + what);
}

ordered_json parse_json(const std::string& text, const std::string& origin) {
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(origin + ": invalid JSON");
  if (!j.is_object()) throw ParseError(origin + ": top level must be an object");
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string resolve_path(const std::string& raw, const std::string& origin) {
  if (raw.empty() || fs::path(raw).is_absolute()) return raw;
  const fs::path base = fs::path(origin).parent_path();
  return base.empty() ? raw : (base / raw).string();
}

double get_number(const ordered_json& j, const char* key, double fallback,
                  const std::string& origin) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) bad(origin, std::string(key) + " must be a number");
  return j.at(key).get<double>();
}

std::string get_string(const ordered_json& j, const char* key, const std::string& fallback,
                       const std::string& origin) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) bad(origin, std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

std::vector<std::string> get_string_list(const ordered_json& j, const char* key,
                                         const std::string& origin) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) bad(origin, std::string(key) + " must be an array of strings");
  for (const auto& v : j.at(key)) {
    if (!v.is_string()) bad(origin, std::string(key) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

void StudyConfig::validate() const {
  if (data_path.empty()) throw ConfigError("config: data path is required");
  roles.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha must be in (0, 1)");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (methods.empty()) throw ConfigError("config: at least one method is required");
  std::set<Method> seen;
  for (Method m : methods) {
    if (!seen.insert(m).second) {
      throw ConfigError("config: method '" + to_string(m) + "' listed twice");
    }
  }
  const bool wants_boot = seen.count(Method::bootstrap_c) || seen.count(Method::bootstrap_t) ||
                          flavor == VCovFlavor::bootstrap;
  if (wants_boot && bootstrap_reps < 2) {
    throw ConfigError("config: bootstrap methods need bootstrap_reps >= 2");
  }
  if (seen.count(Method::tf) && roles.instruments.size() != 1) {
    throw ConfigError("config: the tf method requires exactly one instrument");
  }
  if (!design_tag.empty() && design_tag != "experimental" && design_tag != "observational") {
    throw ConfigError("config: design must be 'experimental' or 'observational'");
  }
  if (ltz && !ltz->from_zfs) {
    if (ltz->mu.size() != static_cast<Eigen::Index>(roles.instruments.size())) {
      throw ConfigError("config: ltz.mu needs one entry per instrument");
    }
  }
  if (ltz && ltz->from_zfs && !roles.zfs_flag) {
    throw ConfigError("config: ltz.from_zfs requires a zfs_flag column");
  }
}

StudyConfig parse_study_config(const std::string& json_text, const std::string& origin) {
  const ordered_json j = parse_json(json_text, origin);
  StudyConfig cfg;
  cfg.name = get_string(j, "name", fs::path(origin).stem().string(), origin);
  cfg.data_path = resolve_path(get_string(j, "data", "", origin), origin);

  if (!j.contains("columns") || !j.at("columns").is_object()) {
    bad(origin, "a 'columns' object is required");
  }
  const auto& cols = j.at("columns");
  cfg.roles.outcome = get_string(cols, "outcome", "", origin);
  cfg.roles.treatment = get_string(cols, "treatment", "", origin);
  cfg.roles.instruments = get_string_list(cols, "instruments", origin);
  cfg.roles.covariates = get_string_list(cols, "covariates", origin);
  if (cols.contains("cluster")) cfg.roles.cluster = get_string(cols, "cluster", "", origin);
  if (cols.contains("weight")) cfg.roles.weight = get_string(cols, "weight", "", origin);
  if (cols.contains("zfs_flag")) cfg.roles.zfs_flag = get_string(cols, "zfs_flag", "", origin);

  cfg.flavor = vcov_flavor_from_string(get_string(j, "vcov", "hc1", origin));
  cfg.alpha = get_number(j, "alpha", 0.05, origin);
  cfg.bootstrap_reps = static_cast<int>(get_number(j, "bootstrap_reps", 1000, origin));
  cfg.seed = static_cast<std::uint64_t>(get_number(j, "seed", 1, origin));
  cfg.threads = static_cast<int>(get_number(j, "threads", 1, origin));
  cfg.design_tag = get_string(j, "design", "", origin);
  if (j.contains("reported_f")) {
    if (!j.at("reported_f").is_boolean()) bad(origin, "reported_f must be a boolean");
    cfg.reported_f = j.at("reported_f").get<bool>();
  }

  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : get_string_list(j, "methods", origin)) {
      cfg.methods.push_back(method_from_string(name));
    }
  }

  if (j.contains("ltz")) {
    const auto& lj = j.at("ltz");
    if (!lj.is_object()) bad(origin, "ltz must be an object");
    LTZConfig lc;
    if (lj.contains("from_zfs")) {
      if (!lj.at("from_zfs").is_boolean()) bad(origin, "ltz.from_zfs must be a boolean");
      lc.from_zfs = lj.at("from_zfs").get<bool>();
    }
    if (!lc.from_zfs) {
      if (!lj.contains("mu") || !lj.at("mu").is_array()) {
        bad(origin, "ltz needs a 'mu' array (or from_zfs: true)");
      }
      const auto& mu = lj.at("mu");
      lc.mu.resize(static_cast<Eigen::Index>(mu.size()));
      for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!mu[i].is_number()) bad(origin, "ltz.mu must hold numbers");
        lc.mu[static_cast<Eigen::Index>(i)] = mu[i].get<double>();
      }
      const auto p = lc.mu.size();
      lc.omega = Eigen::MatrixXd::Zero(p, p);
      if (lj.contains("omega")) {
        const auto& om = lj.at("omega");
        if (!om.is_array() || om.size() != static_cast<std::size_t>(p)) {
          bad(origin, "ltz.omega must be a square matrix as nested arrays");
        }
        for (std::size_t r = 0; r < om.size(); ++r) {
          if (!om[r].is_array() || om[r].size() != static_cast<std::size_t>(p)) {
            bad(origin, "ltz.omega must be a square matrix as nested arrays");
          }
          for (std::size_t c = 0; c < om[r].size(); ++c) {
            if (!om[r][c].is_number()) bad(origin, "ltz.omega must hold numbers");
            lc.omega(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                om[r][c].get<double>();
          }
        }
      }
    }
    cfg.ltz = std::move(lc);
  }

  if (j.contains("output")) {
    const auto& out = j.at("output");
    if (!out.is_object()) bad(origin, "output must be an object");
    cfg.out_json = resolve_path(get_string(out, "json", "", origin), origin);
    cfg.out_svg = resolve_path(get_string(out, "svg", "", origin), origin);
    cfg.out_csv = resolve_path(get_string(out, "csv", "", origin), origin);
  }

  cfg.validate();
  return cfg;
}

StudyConfig load_study_config(const std::string& path) {
  return parse_study_config(read_file(path), path);
}

ordered_json config_to_json(const StudyConfig& cfg) {
  ordered_json j;
  j["name"] = cfg.name;
  j["data"] = cfg.data_path;
  ordered_json cols;
  cols["outcome"] = cfg.roles.outcome;
  cols["treatment"] = cfg.roles.treatment;
  cols["instruments"] = cfg.roles.instruments;
  cols["covariates"] = cfg.roles.covariates;
  if (cfg.roles.cluster) cols["cluster"] = *cfg.roles.cluster;
  if (cfg.roles.weight) cols["weight"] = *cfg.roles.weight;
  if (cfg.roles.zfs_flag) cols["zfs_flag"] = *cfg.roles.zfs_flag;
  j["columns"] = std::move(cols);
  j["vcov"] = to_string(cfg.flavor);
  j["alpha"] = cfg.alpha;
  j["bootstrap_reps"] = cfg.bootstrap_reps;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  ordered_json methods = ordered_json::array();
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  j["methods"] = std::move(methods);
  if (!cfg.design_tag.empty()) j["design"] = cfg.design_tag;
  if (cfg.reported_f) j["reported_f"] = *cfg.reported_f;
  if (cfg.ltz) {
    ordered_json lj;
    lj["from_zfs"] = cfg.ltz->from_zfs;
    if (!cfg.ltz->from_zfs) {
      ordered_json mu = ordered_json::array();
      for (Eigen::Index i = 0; i < cfg.ltz->mu.size(); ++i) mu.push_back(cfg.ltz->mu[i]);
      lj["mu"] = std::move(mu);
      ordered_json omega = ordered_json::array();
      for (Eigen::Index r = 0; r < cfg.ltz->omega.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < cfg.ltz->omega.cols(); ++c) {
          row.push_back(cfg.ltz->omega(r, c));
        }
        omega.push_back(std::move(row));
      }
      lj["omega"] = std::move(omega);
    }
    j["ltz"] = std::move(lj);
  }
  ordered_json out;
  if (!cfg.out_json.empty()) out["json"] = cfg.out_json;
  if (!cfg.out_svg.empty()) out["svg"] = cfg.out_svg;
  if (!cfg.out_csv.empty()) out["csv"] = cfg.out_csv;
  if (!out.empty()) j["output"] = std::move(out);
  return j;
}

void SimSpec::validate() const {
  if (n < 10) throw ConfigError("sim: n must be >= 10");
  if (p_z < 1) throw ConfigError("sim: p_z must be >= 1");
  if (reps < 100) throw ConfigError("sim: reps must be >= 100");
  if (threads < 1) throw ConfigError("sim: threads must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("sim: alpha must be in (0, 1)");
  if (cluster_count < 0) throw ConfigError("sim: cluster count must be >= 0");
  if (cluster_count > 0) {
    if (cluster_count < 2) throw ConfigError("sim: need at least 2 clusters");
    if (!(within_corr >= 0.0 && within_corr < 1.0)) {
      throw ConfigError("sim: within-cluster correlation must be in [0, 1)");
    }
  }
  if (1.0 - rho_de * rho_de - rho_ze * rho_ze <= 0.0) {
    throw ConfigError("sim: shock correlations imply a non-positive-definite joint law");
  }
  if (methods.empty()) throw ConfigError("sim: at least one method is required");
  const bool wants_boot =
      std::any_of(methods.begin(), methods.end(),
                  [](Method m) { return m == Method::bootstrap_c || m == Method::bootstrap_t; });
  if (wants_boot && bootstrap_reps < 2) {
    throw ConfigError("sim: bootstrap methods need bootstrap_reps >= 2");
  }
  if (std::count(methods.begin(), methods.end(), Method::tf) > 0 && p_z != 1) {
    throw ConfigError("sim: the tf method requires p_z = 1");
  }
}

Eigen::MatrixXd SimSpec::correlation_matrix() const {
  // Order: z_1 .. z_pz, outcome shock, treatment shock.
  const Eigen::Index m = p_z + 2;
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m, m);
  R(0, p_z) = R(p_z, 0) = rho_ze;
  R(p_z, p_z + 1) = R(p_z + 1, p_z) = rho_de;
  return R;
}

SimSpec parse_sim_spec(const std::string& json_text, const std::string& origin) {
  const ordered_json j = parse_json(json_text, origin);
  SimSpec spec;
  spec.n = static_cast<Eigen::Index>(get_number(j, "n", 1000, origin));
  spec.p_z = static_cast<int>(get_number(j, "p_z", 1, origin));
  spec.pi = get_number(j, "pi", 1.0, origin);
  spec.rho_de = get_number(j, "rho_de", 0.0, origin);
  spec.rho_ze = get_number(j, "rho_ze", 0.0, origin);
  spec.tau_true = get_number(j, "tau_true", 0.0, origin);
  spec.reps = static_cast<int>(get_number(j, "reps", 1000, origin));
  spec.seed = static_cast<std::uint64_t>(get_number(j, "seed", 1, origin));
  spec.threads = static_cast<int>(get_number(j, "threads", 1, origin));
  spec.alpha = get_number(j, "alpha", 0.05, origin);
  spec.flavor = vcov_flavor_from_string(get_string(j, "vcov", "hc1", origin));
  spec.bootstrap_reps = static_cast<int>(get_number(j, "bootstrap_reps", 400, origin));
  if (j.contains("clusters")) {
    const auto& cj = j.at("clusters");
    if (!cj.is_object()) bad(origin, "clusters must be an object");
    spec.cluster_count = static_cast<int>(get_number(cj, "count", 0, origin));
    spec.within_corr = get_number(cj, "within_corr", 0.0, origin);
  }
  if (j.contains("methods")) {
    spec.methods.clear();
    for (const auto& name : get_string_list(j, "methods", origin)) {
      spec.methods.push_back(method_from_string(name));
    }
  }
  spec.validate();
  return spec;
}

SimSpec load_sim_spec(const std::string& path) {
  return parse_sim_spec(read_file(path), path);
}

}  // namespace ivdiag

#include "ivdiag/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "ivdiag/errors.hpp"

namespace ivdiag {

std::vector<std::string> ColumnRoles::numeric_columns() const {
  std::vector<std::string> out{outcome, treatment};
  out.insert(out.end(), instruments.begin(), instruments.end());
  out.insert(out.end(), covariates.begin(), covariates.end());
  if (weight) out.push_back(*weight);
  if (zfs_flag) out.push_back(*zfs_flag);
  return out;
}

std::vector<std::string> ColumnRoles::all_columns() const {
  auto out = numeric_columns();
  if (cluster) out.push_back(*cluster);
  return out;
}

void ColumnRoles::validate() const {
  if (outcome.empty()) throw ConfigError("no outcome column named");
  if (treatment.empty()) throw ConfigError("no treatment column named");
  if (instruments.empty()) throw ConfigError("at least one instrument column is required");
  std::set<std::string> seen;
  for (const auto& name : all_columns()) {
    if (name.empty()) throw ConfigError("empty column name in roles");
    if (!seen.insert(name).second) {
      throw ConfigError("column '" + name + "' assigned more than one role");
    }
  }
}

bool Dataset::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const Eigen::VectorXd& Dataset::col(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return columns[j];
  }
  throw ConfigError("no column named '" + name + "'");
}

Eigen::MatrixXd Dataset::cols(const std::vector<std::string>& which) const {
  Eigen::MatrixXd out(n_rows(), static_cast<Eigen::Index>(which.size()));
  for (std::size_t j = 0; j < which.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = col(which[j]);
  }
  return out;
}

namespace {

bool parse_double(const std::string& cell, double* out) {
  const char* s = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s) return false;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return false;
  *out = v;
  return true;
}

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset dataset_from_table(const CsvTable& table, const ColumnRoles& roles,
                           const std::string& origin) {
  roles.validate();
  Dataset data;
  data.roles = roles;

  const auto numeric = roles.numeric_columns();
  std::vector<std::ptrdiff_t> numeric_idx;
  for (const auto& name : numeric) {
    const auto j = table.find(name);
    if (j < 0) throw ConfigError(origin + ": no column named '" + name + "'");
    numeric_idx.push_back(j);
  }
  std::ptrdiff_t cluster_idx = -1;
  if (roles.cluster) {
    cluster_idx = table.find(*roles.cluster);
    if (cluster_idx < 0) throw ConfigError(origin + ": no column named '" + *roles.cluster + "'");
  }

  // Listwise deletion: a row survives only if every role column is nonmissing.
  std::vector<std::size_t> keep;
  keep.reserve(table.n_rows());
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    bool complete = true;
    for (auto j : numeric_idx) {
      if (trimmed(table.rows[i][static_cast<std::size_t>(j)]).empty()) {
        complete = false;
        break;
      }
    }
    if (complete && cluster_idx >= 0 &&
        trimmed(table.rows[i][static_cast<std::size_t>(cluster_idx)]).empty()) {
      complete = false;
    }
    if (complete) keep.push_back(i);
  }
  data.n_dropped = static_cast<long>(table.n_rows() - keep.size());

  const auto n = static_cast<Eigen::Index>(keep.size());
  for (std::size_t c = 0; c < numeric.size(); ++c) {
    Eigen::VectorXd col(n);
    const auto j = static_cast<std::size_t>(numeric_idx[c]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string cell = trimmed(table.rows[keep[static_cast<std::size_t>(i)]][j]);
      double v;
      if (!parse_double(cell, &v)) {
        throw ParseError(origin + ": row " + std::to_string(keep[static_cast<std::size_t>(i)] + 2) +
                         ", column '" + numeric[c] + "': cannot parse '" + cell + "' as a number");
      }
      col[i] = v;
    }
    data.names.push_back(numeric[c]);
    data.columns.push_back(std::move(col));
  }

  if (cluster_idx >= 0) {
    data.cluster_codes.reserve(static_cast<std::size_t>(n));
    std::map<std::string, int> codes;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string label =
          trimmed(table.rows[keep[static_cast<std::size_t>(i)]][static_cast<std::size_t>(cluster_idx)]);
      auto it = codes.find(label);
      if (it == codes.end()) {
        it = codes.emplace(label, static_cast<int>(data.cluster_levels.size())).first;
        data.cluster_levels.push_back(label);
      }
      data.cluster_codes.push_back(it->second);
    }
  }

  validate_dataset(data);
  return data;
}

Dataset load_dataset(const std::string& path, const ColumnRoles& roles) {
  return dataset_from_table(read_csv(path), roles, path);
}

void validate_dataset(const Dataset& data) {
  if (data.n_rows() == 0) throw DegreesOfFreedomError("no complete rows after listwise deletion");
  if (data.roles.cluster && data.n_clusters() < 2) {
    throw ClusterCountError("need at least 2 clusters, found " +
                            std::to_string(data.n_clusters()));
  }
  if (data.roles.weight) {
    const auto& w = data.col(*data.roles.weight);
    if ((w.array() <= 0.0).any()) throw ConfigError("weights must be strictly positive");
  }
  if (data.roles.zfs_flag) {
    const auto& f = data.col(*data.roles.zfs_flag);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (f[i] != 0.0 && f[i] != 1.0) {
        throw ConfigError("placebo flag column must contain only 0 or 1");
      }
    }
  }
}

}  // namespace ivdiag

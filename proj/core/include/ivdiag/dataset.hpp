#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivdiag/csv.hpp"

namespace ivdiag {

// Which columns play which part in a study.
struct ColumnRoles {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> instruments;
  std::vector<std::string> covariates;
  std::optional<std::string> cluster;
  std::optional<std::string> weight;
  // 0/1 column marking the subsample used for the zero-first-stage placebo.
  std::optional<std::string> zfs_flag;

  std::vector<std::string> numeric_columns() const;  // all but cluster
  std::vector<std::string> all_columns() const;
  void validate() const;
};

// Column store for one study.  All analysis columns are numeric; the cluster
// column is kept as integer codes 0..G-1 in the order of first appearance.
struct Dataset {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;
  std::vector<int> cluster_codes;               // empty when no cluster column
  std::vector<std::string> cluster_levels;      // code -> original label
  ColumnRoles roles;
  long n_dropped = 0;                           // rows removed for missing values

  Eigen::Index n_rows() const { return columns.empty() ? 0 : columns.front().size(); }
  int n_clusters() const { return static_cast<int>(cluster_levels.size()); }
  bool has(const std::string& name) const;
  const Eigen::VectorXd& col(const std::string& name) const;
  Eigen::MatrixXd cols(const std::vector<std::string>& which) const;
};

// Builds a Dataset from a delimited file: checks that every role column
// exists, parses numeric cells, and drops rows with any missing value in a
// role column (the count is recorded in n_dropped).
Dataset load_dataset(const std::string& path, const ColumnRoles& roles);
Dataset dataset_from_table(const CsvTable& table, const ColumnRoles& roles,
                           const std::string& origin = "<table>");

// Role-aware sanity checks shared by the loaders: at least one instrument,
// at least two clusters when clustering, strictly positive weights.
void validate_dataset(const Dataset& data);

}  // namespace ivdiag

#pragma once

#include <string>
#include <vector>

namespace ivdiag {

// A parsed delimited text file: header row plus string cells.  Values are kept
// as text so that callers decide which columns must be numeric; an empty cell
// means missing.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }
  // Index of a named column, or -1.
  std::ptrdiff_t find(const std::string& name) const;
};

// Reads a comma-separated file with a mandatory header row.  Quoted fields
// with embedded commas/quotes are handled; the decimal separator is '.'.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin = "<string>");

std::string csv_escape(const std::string& field);

}  // namespace ivdiag

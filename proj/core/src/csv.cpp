#include "ivdiag/csv.hpp"

#include <fstream>
#include <sstream>

#include "ivdiag/errors.hpp"

namespace ivdiag {

std::ptrdiff_t CsvTable::find(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<std::ptrdiff_t>(j);
  }
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t line_no,
                                    const std::string& origin) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty()) {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": quote inside unquoted field");
      }
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw ParseError(origin + ":" + std::to_string(line_no) + ": unterminated quote");
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line_no == 1) {
      // Strip a UTF-8 byte order mark if present.
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
      }
      table.header = split_line(line, line_no, origin);
      if (table.header.empty() || (table.header.size() == 1 && table.header[0].empty())) {
        throw ParseError(origin + ": empty header row");
      }
      continue;
    }
    if (line.empty()) continue;  // ignore blank lines
    auto fields = split_line(line, line_no, origin);
    if (fields.size() != table.header.size()) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) {
    throw ParseError(origin + ": empty file");
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

std::string csv_escape(const std::string& field) {
  bool needs_quotes = false;
  for (char c : field) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      needs_quotes = true;
      break;
    }
  }
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace ivdiag

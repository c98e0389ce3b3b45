// Minimal CSV helpers for the signal, pose and embedding file formats.
// All files are UTF-8 with LF line endings and '.'-decimal doubles.
#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "impsim/error.hpp"

namespace impsim {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double_field(const std::string& s, const std::string& context, int line_no) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  // trailing spaces are fine, anything else is not
  const char* p = res.ptr;
  while (p < e && (*p == ' ' || *p == '\t')) ++p;
  if (res.ec != std::errc() || p != e) {
    throw ParseError(context + ": line " + std::to_string(line_no) + ": bad numeric field '" + s + "'");
  }
  return v;
}

// Shortest representation that round-trips exactly through parse.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Reads a numeric CSV with a single header line.
inline CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv: " + path);
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    if (line_no == 1) {
      t.header = split_csv_line(line);
      continue;
    }
    auto fields = split_csv_line(line);
    if (!t.rows.empty() && fields.size() != t.rows.front().size()) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": ragged row");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double_field(f, path, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ParseError(path + ": empty file");
  return t;
}

}  // namespace impsim

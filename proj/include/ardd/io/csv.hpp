#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ardd/error.hpp"

namespace ardd::io {

/// Fully numeric comma-separated table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  Eigen::Index rows() const { return columns.empty() ? 0 : static_cast<Eigen::Index>(columns.front().size()); }

  Eigen::Index find(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Eigen::Index>(j);
    return -1;
  }

  Eigen::VectorXd column(const std::string& name) const {
    const Eigen::Index j = find(name);
    if (j < 0) fail(ErrorCode::InvalidDataset, "column '" + name + "' not found in data file");
    const auto& c = columns[static_cast<std::size_t>(j)];
    return Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses a header row plus numeric rows. Any non-numeric or missing cell
/// raises ParseError naming the data row (1-based, header excluded) and the
/// column.
inline CsvTable read_csv(std::istream& in, const std::string& source = "<input>") {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, source + ": empty file, header row required");
  for (auto name : detail::split(line)) {
    if (name.empty()) fail(ErrorCode::ParseError, source + ": empty column name in header");
    t.header.emplace_back(name);
  }
  for (std::size_t a = 0; a < t.header.size(); ++a)
    for (std::size_t b = a + 1; b < t.header.size(); ++b)
      if (t.header[a] == t.header[b]) fail(ErrorCode::ParseError, source + ": duplicate column '" + t.header[a] + "'");
  t.columns.assign(t.header.size(), {});
  long row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split(line);
    if (cells.size() != t.header.size()) {
      fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                      " fields, expected " + std::to_string(t.header.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_double(cells[j], v) || !std::isfinite(v)) {
        fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ", column '" + t.header[j] +
                                        "': cannot parse '" + std::string(cells[j]) + "' as a finite number");
      }
      t.columns[j].push_back(v);
    }
  }
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidDataset, "cannot open data file '" + path + "'");
  return read_csv(in, path);
}

/// Numbers at 12 significant digits.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Full round-trip precision, for files that are re-ingested.
inline std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace ardd::io

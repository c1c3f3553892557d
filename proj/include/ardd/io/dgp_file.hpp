#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ardd/error.hpp"
#include "ardd/io/csv.hpp"
#include "ardd/sim.hpp"

namespace ardd::io {

// DGP spec file: '#' comments, one `key = value` per line, vectors as
// whitespace-separated numbers, and sigma as a block of rows closed by `end`:
//
//   tau_true = 0.3
//   gamma_true = 0.5
//   delta_true = 0
//   noise_sd = 1
//   margin_index = 2
//   mu = 0 0 0
//   beta = 0 0
//   sigma =
//     1 0.3 0.2
//     0.3 1 0.2
//     0.2 0.2 1
//   end
//
// Every key is required exactly once; nothing is defaulted.

namespace detail {

inline std::vector<double> parse_numbers(std::string_view text, const std::string& where) {
  std::vector<double> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    if (!parse_double(tok, v) || !std::isfinite(v)) fail(ErrorCode::ParseError, where + ": cannot parse '" + tok + "' as a finite number");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

inline DgpSpec read_dgp(std::istream& in, const std::string& source = "<dgp>") {
  static const std::vector<std::string> keys{"tau_true", "gamma_true", "delta_true", "noise_sd", "margin_index", "mu", "beta", "sigma"};
  std::map<std::string, std::vector<std::vector<double>>> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::ParseError, where + ": expected 'key = value'");
    const std::string key(detail::trim(body.substr(0, eq)));
    const auto value = detail::trim(body.substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) fail(ErrorCode::ParseError, where + ": unknown key '" + key + "'");
    if (seen.count(key)) fail(ErrorCode::ParseError, where + ": duplicate key '" + key + "'");
    auto& rows = seen[key];
    if (key != "sigma") {
      rows.push_back(detail::parse_numbers(value, where));
      if (rows[0].empty() && key != "beta") fail(ErrorCode::ParseError, where + ": '" + key + "' has no value");
      continue;
    }
    if (!value.empty()) fail(ErrorCode::ParseError, where + ": sigma rows start on the next line");
    bool closed = false;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string row_where = source + ":" + std::to_string(lineno);
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto row = detail::trim(line);
      if (row.empty()) continue;
      if (row == "end") {
        closed = true;
        break;
      }
      rows.push_back(detail::parse_numbers(row, row_where));
    }
    if (!closed) fail(ErrorCode::ParseError, source + ": sigma block not closed by 'end'");
  }
  for (const auto& k : keys)
    if (!seen.count(k)) fail(ErrorCode::ParseError, source + ": missing required key '" + k + "'");

  auto scalar = [&](const std::string& k) {
    if (seen[k][0].size() != 1) fail(ErrorCode::ParseError, source + ": '" + k + "' must be a single number");
    return seen[k][0][0];
  };
  auto vec = [&](const std::string& k) {
    const auto& v = seen[k][0];
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  DgpSpec d;
  d.tau_true = scalar("tau_true");
  d.gamma_true = scalar("gamma_true");
  d.delta_true = scalar("delta_true");
  d.noise_sd = scalar("noise_sd");
  const double mi = scalar("margin_index");
  if (mi != std::floor(mi)) fail(ErrorCode::ParseError, source + ": margin_index must be an integer");
  d.margin_index = static_cast<Eigen::Index>(mi);
  d.mu = vec("mu");
  d.beta_true = vec("beta");
  const auto& rows = seen["sigma"];
  const Eigen::Index k = d.mu.size();
  if (static_cast<Eigen::Index>(rows.size()) != k) fail(ErrorCode::ParseError, source + ": sigma must have one row per entry of mu");
  d.sigma.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != k)
      fail(ErrorCode::ParseError, source + ": sigma row " + std::to_string(i + 1) + " has " + std::to_string(r.size()) + " entries, expected " + std::to_string(k));
    for (Eigen::Index j = 0; j < k; ++j) d.sigma(i, j) = r[static_cast<std::size_t>(j)];
  }
  d.validate();
  return d;
}

inline DgpSpec read_dgp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open DGP spec file '" + path + "'");
  return read_dgp(in, path);
}

inline void write_dgp(std::ostream& out, const DgpSpec& d) {
  auto row = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_exact(v[i]);
    out << "\n";
  };
  out << "tau_true = " << format_exact(d.tau_true) << "\n";
  out << "gamma_true = " << format_exact(d.gamma_true) << "\n";
  out << "delta_true = " << format_exact(d.delta_true) << "\n";
  out << "noise_sd = " << format_exact(d.noise_sd) << "\n";
  out << "margin_index = " << d.margin_index << "\n";
  out << "mu = ";
  row(d.mu);
  out << "beta = ";
  row(d.beta_true);
  out << "sigma =\n";
  for (Eigen::Index i = 0; i < d.sigma.rows(); ++i) {
    out << "  ";
    row(d.sigma.row(i).transpose());
  }
  out << "end\n";
}

}  // namespace ardd::io

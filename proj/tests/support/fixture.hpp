#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ardd/io/csv.hpp"
#include "ardd/rdd.hpp"

namespace ardd::testing {

inline std::string fixture_path(const std::string& name) { return std::string(ARDD_FIXTURE_DIR) + "/" + name; }

/// The 500-row bandwidth fixture with covariates z1..z3.
inline RddDataset load_ik_fixture() {
  const io::CsvTable t = io::read_csv_file(fixture_path("ik_fixture.csv"));
  Matrix z(t.rows(), 3);
  z.col(0) = t.column("z1");
  z.col(1) = t.column("z2");
  z.col(2) = t.column("z3");
  return RddDataset(t.column("y"), t.column("x"), 0.0, DesignMatrix(z, {"z1", "z2", "z3"}));
}

inline nlohmann::json load_ik_reference() {
  std::ifstream in(fixture_path("ik_reference.json"));
  return nlohmann::json::parse(in);
}

inline double relative_error(double a, double ref) { return std::abs(a - ref) / std::abs(ref); }

}  // namespace ardd::testing

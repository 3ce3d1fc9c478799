#pragma once

#include "dpdwald/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dpdwald {

/// Comma separated, '.' decimal, mandatory header, numeric body.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

CsvTable parse_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::string& path);
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values);

struct RegressionData {
  Vector y;
  Matrix X;
};

/// Columns y, x1, ..., xk (in any order after y is found; x columns sorted by index).
RegressionData regression_from_table(const CsvTable& table, const std::string& source);
RegressionData read_regression_csv(const std::string& path);

}  // namespace dpdwald

#include "dpdwald/csv.hpp"

#include <doctest.h>

#include <sstream>

using namespace dpdwald;

namespace {

CsvTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in, "input.csv");
}

std::string error_of(const std::string& text) {
  try {
    regression_from_table(parse(text), "input.csv");
  } catch (const DomainError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("well-formed input") {
  const CsvTable t = parse("\xEF\xBB\xBFy,x1,x2\r\n1.5,1,-2e-3\n\n+2,1,0.25\n");
  CHECK(t.header == std::vector<std::string>{"y", "x1", "x2"});
  REQUIRE(t.values.rows() == 2);
  CHECK(t.values(0, 2) == -2e-3);
  CHECK(t.values(1, 0) == 2.0);
  const RegressionData r = regression_from_table(t, "input.csv");
  CHECK(r.y.size() == 2);
  CHECK(r.X.cols() == 2);
  CHECK(r.X(1, 1) == 0.25);
}

TEST_CASE("covariates are ordered by index") {
  const RegressionData r = regression_from_table(parse("x2,y,x1\n5,1,3\n"), "in");
  CHECK(r.X(0, 0) == 3.0);
  CHECK(r.X(0, 1) == 5.0);
  CHECK(r.y(0) == 1.0);
}

TEST_CASE("errors carry row and column") {
  CHECK(error_of("y,x1\n1,2\n3,abc\n").find("row 3, column 2") != std::string::npos);
  CHECK(error_of("y,x1\n1,2,3\n").find("row 2") != std::string::npos);
  CHECK(error_of("y,x1\n1,nan\n").find("column 2") != std::string::npos);
  CHECK(error_of("y,x1\n1,\n").find("column 2") != std::string::npos);
  CHECK(error_of("y,x1\n").find("no observations") != std::string::npos);
  CHECK(error_of("").find("no observations") != std::string::npos);
  CHECK(error_of("x1,x2\n1,2\n").find("missing column y") != std::string::npos);
  CHECK(error_of("y,x1,x3\n1,2,3\n").find("x1..xk") != std::string::npos);
  CHECK(error_of("y,z\n1,2\n").find("unexpected column") != std::string::npos);
  CHECK(error_of("y\n1\n").find("no covariate") != std::string::npos);
  CHECK_THROWS_AS(read_csv("/nonexistent/file.csv"), DomainError);
}

TEST_CASE("write then parse round trips exactly") {
  Matrix m(2, 2);
  m << 0.1, -1.0 / 3.0, 1e-300, 12345.678901234567;
  std::ostringstream out;
  write_csv(out, {"a", "b"}, m);
  std::istringstream in(out.str());
  const CsvTable t = parse_csv(in, "rt");
  CHECK(t.values == m);
}

#include "dpdwald/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace dpdwald {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t row, std::size_t col, const std::string& msg) {
  std::ostringstream os;
  os << source << ": row " << row;
  if (col > 0) os << ", column " << col;
  os << ": " << msg;
  throw DomainError(os.str());
}

}  // namespace

CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  std::size_t row = 0;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++row;
    if (row == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      table.header = cells;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c].empty()) fail(source, row, c + 1, "empty column name in header");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      fail(source, row, 0,
           "expected " + std::to_string(table.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      const char* first = s.data();
      const char* last = s.data() + s.size();
      if (!s.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, values[c]);
      if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(values[c])) {
        fail(source, row, c + 1, "cannot parse '" + s + "' as a finite number");
      }
    }
    rows.push_back(std::move(values));
  }
  if (!have_header) throw DomainError(source + ": no observations (missing header)");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  return parse_csv(in, path);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << "\n";
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << values(r, c);
    out << "\n";
  }
}

RegressionData regression_from_table(const CsvTable& table, const std::string& source) {
  int ycol = -1;
  std::map<int, int> xcols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (name == "y") {
      ycol = static_cast<int>(c);
    } else if (name.size() > 1 && name[0] == 'x' &&
               std::all_of(name.begin() + 1, name.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      const int idx = std::stoi(name.substr(1));
      if (idx < 1 || xcols.count(idx)) throw DomainError(source + ": bad or duplicate column " + name);
      xcols[idx] = static_cast<int>(c);
    } else {
      throw DomainError(source + ": unexpected column '" + name + "' (want y, x1..xk)");
    }
  }
  if (ycol < 0) throw DomainError(source + ": missing column y");
  if (xcols.empty()) throw DomainError(source + ": no covariate columns x1..xk");
  int expect = 1;
  for (const auto& [idx, col] : xcols) {
    if (idx != expect++) throw DomainError(source + ": covariate columns must be x1..xk without gaps");
  }
  if (table.values.rows() == 0) throw DomainError(source + ": no observations");
  RegressionData out;
  out.y = table.values.col(ycol);
  out.X.resize(table.values.rows(), static_cast<Eigen::Index>(xcols.size()));
  int j = 0;
  for (const auto& [idx, col] : xcols) out.X.col(j++) = table.values.col(col);
  return out;
}

RegressionData read_regression_csv(const std::string& path) { return regression_from_table(read_csv(path), path); }

}  // namespace dpdwald

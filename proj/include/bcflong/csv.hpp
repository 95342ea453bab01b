#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bcflong/common.hpp"

namespace bcflong {

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns

  int col(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return static_cast<int>(j);
    throw DataError("missing column '" + name + "'");
  }

  bool has_col(const std::string& name) const {
    for (const auto& c : columns)
      if (c == name) return true;
    return false;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline void split_fields(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline double parse_double(const std::string& field, std::size_t row, std::size_t col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError("non-numeric value '" + field + "' at row " + std::to_string(row) +
                    ", column " + std::to_string(col + 1));
  return v;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  detail::split_fields(line, t.columns);
  for (const auto& c : t.columns)
    if (c.empty()) throw DataError("'" + path + "' has an empty column name in the header");

  std::vector<double> flat;
  std::vector<std::string> fields;
  std::size_t nrow = 0;
  std::size_t ncol = t.columns.size();
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    detail::split_fields(line, fields);
    ++nrow;
    if (fields.size() != ncol)
      throw DataError("'" + path + "' row " + std::to_string(nrow) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(ncol));
    for (std::size_t j = 0; j < ncol; ++j) flat.push_back(detail::parse_double(fields[j], nrow, j));
  }
  t.values.resize(nrow, ncol);
  for (std::size_t i = 0; i < nrow; ++i)
    for (std::size_t j = 0; j < ncol; ++j) t.values(i, j) = flat[i * ncol + j];
  return t;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const Eigen::MatrixXd& values) {
  require(columns.size() == static_cast<std::size_t>(values.cols()),
          "write_csv: header width does not match data width");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) out << ',';
    out << columns[j];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace bcflong

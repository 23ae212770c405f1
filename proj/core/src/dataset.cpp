// Copyright 2026 The pstmle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pstmle/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pstmle/errors.hpp"

namespace pstmle {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string::size_type start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_cell(const std::string& cell, std::size_t line_number) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end) {
    throw ParseError("line " + std::to_string(line_number) +
                         ": cannot parse numeric cell '" + cell + "'",
                     line_number);
  }
  return value;
}

std::string expected_header(Eigen::Index p) {
  std::string header = "y,a";
  for (Eigen::Index j = 1; j <= p; ++j) {
    header += ",w" + std::to_string(j);
  }
  return header;
}

void strip_trailing_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void Dataset::validate() const {
  if (y.size() == 0) throw EmptyInputError("dataset has no rows");
  if (a.size() != y.size() || w.rows() != y.size()) {
    throw ShapeError("dataset components disagree on the number of rows");
  }
  if (w.cols() == 0) throw ShapeError("dataset has no covariates");
  if (!y.allFinite() || !w.allFinite()) {
    throw DomainError("dataset contains a non-finite value");
  }
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0 && a[i] != 1.0) {
      throw SchemaError("treatment column must be 0/1");
    }
  }
}

Dataset Dataset::rows(const std::vector<std::size_t>& indices) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(indices.size());
  out.y.resize(m);
  out.a.resize(m);
  out.w.resize(m, w.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
    if (r < 0 || r >= y.size()) throw ShapeError("row index out of range");
    out.y[i] = y[r];
    out.a[i] = a[r];
    out.w.row(i) = w.row(r);
  }
  return out;
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input", 1);
  strip_trailing_cr(line);

  const auto header_cells = split_csv_line(line);
  if (header_cells.size() < 3) {
    throw SchemaError("header must be y,a,w1,...,wp");
  }
  const auto p = static_cast<Eigen::Index>(header_cells.size() - 2);
  if (line != expected_header(p)) {
    throw SchemaError("header must be exactly '" + expected_header(p) +
                      "', got '" + line + "'");
  }

  std::vector<double> ys;
  std::vector<double> as;
  std::vector<double> ws;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    strip_trailing_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header_cells.size()) {
      throw ParseError("line " + std::to_string(line_number) + ": expected " +
                           std::to_string(header_cells.size()) +
                           " cells, got " + std::to_string(cells.size()),
                       line_number);
    }
    ys.push_back(parse_cell(cells[0], line_number));
    const double a = parse_cell(cells[1], line_number);
    if (a != 0.0 && a != 1.0) {
      throw SchemaError("line " + std::to_string(line_number) +
                        ": treatment must be 0 or 1");
    }
    as.push_back(a);
    for (std::size_t j = 2; j < cells.size(); ++j) {
      ws.push_back(parse_cell(cells[j], line_number));
    }
  }
  if (ys.empty()) throw EmptyInputError("dataset has no data rows");

  Dataset data;
  const auto n = static_cast<Eigen::Index>(ys.size());
  data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  data.a = Eigen::Map<Eigen::VectorXd>(as.data(), n);
  data.w.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      data.w(i, j) = ws[static_cast<std::size_t>(i * p + j)];
    }
  }
  data.validate();
  return data;
}

Dataset read_dataset_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  data.validate();
  out << expected_header(data.num_covariates()) << '\n';
  char buffer[40];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    std::snprintf(buffer, sizeof buffer, "%.17g", data.y[i]);
    out << buffer << ',' << (data.a[i] == 1.0 ? '1' : '0');
    for (Eigen::Index j = 0; j < data.num_covariates(); ++j) {
      std::snprintf(buffer, sizeof buffer, "%.17g", data.w(i, j));
      out << ',' << buffer;
    }
    out << '\n';
  }
}

void write_dataset_csv_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing", 0);
  write_dataset_csv(out, data);
  out.flush();
  if (!out) throw ParseError("failed writing '" + path + "'", 0);
}

}  // namespace pstmle

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

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pstmle {

// Observational unit triple (Y, A, W): outcome, binary treatment, and a
// row-per-unit covariate matrix.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd a;
  Eigen::MatrixXd w;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index num_covariates() const { return w.cols(); }

  // Throws unless y/a/w agree on the number of rows, all entries are
  // finite, and a is 0/1.
  void validate() const;

  // Row subset in the given order (indices may repeat).
  Dataset rows(const std::vector<std::size_t>& indices) const;
};

// CSV with the exact header "y,a,w1,...,wp" and one unit per row. Numbers
// are parsed with full round-trip precision; any malformed cell reports its
// 1-based line number.
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv_file(const std::string& path);

// Writes values with enough digits (%.17g) that reading the file back
// reproduces the dataset bit for bit.
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv_file(const std::string& path, const Dataset& data);

}  // namespace pstmle

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
#include <stdexcept>
#include <string>
#include <vector>

namespace pstmle {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument is outside its mathematical domain (bad quantile level,
// bad grid bounds, non-probability propensity, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Vector/matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient design (or underdetermined fit without a ridge guard).
class SingularDesignError : public Error {
 public:
  using Error::Error;
};

// An iterative solver ran out of iterations. Carries the last iterate so
// callers can inspect where the solver stalled.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

// The fluctuation covariate is identically zero.
class DegenerateCovariateError : public Error {
 public:
  using Error::Error;
};

// Constant outcome: min-max scaling is undefined.
class DegenerateOutcomeError : public Error {
 public:
  using Error::Error;
};

// A treatment arm is empty where a per-arm normalizer is required.
class EmptyArmError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based; 0 means "not line-specific".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Structurally valid file whose contents violate the data schema
// (non-binary treatment column, bad header, ...).
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace pstmle

// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace laf {

/// Batch-major dense matrix: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;
using SampleId = std::int64_t;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unsupported or inconsistent configuration (architecture, shapes, flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input tensor does not match what the model expects.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise invalid numbers encountered.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Binary or JSON input could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A metric was requested over an empty population.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, long batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  long batch() const noexcept { return batch_; }

 private:
  int epoch_;
  long batch_;
};

/// Channel-height-width shape of a single input sample. Vector inputs use
/// channels = height = 1.
struct InputShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  Index flat() const { return Index{channels} * height * width; }
  bool operator==(const InputShape&) const = default;
  std::string to_string() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
};

}  // namespace laf

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jsb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration or distribution document. `field()` names
/// the offending config field when one is known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : "field '" + field + "': " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Batch or matrix shape does not satisfy an operation's precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// m below the minimum an estimator needs (usually m < 2).
class InvalidRolloutCount : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// n below the minimum an estimator needs (usually n < 2).
class InvalidBatchSize : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Raised by exact enumeration when the outcome space exceeds the guard.
class TractabilityError : public Error {
 public:
  TractabilityError(std::uint64_t outcome_count, std::uint64_t limit)
      : Error("exact enumeration refused: " + std::to_string(outcome_count) +
              " outcomes exceed the limit of " + std::to_string(limit)),
        outcome_count_(outcome_count) {}

  std::uint64_t outcome_count() const noexcept { return outcome_count_; }

 private:
  std::uint64_t outcome_count_;
};

/// Toy training aborted by the divergence guard.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace jsb

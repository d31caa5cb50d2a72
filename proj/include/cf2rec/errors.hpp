#pragma once

#include <stdexcept>
#include <string>

namespace cf2rec {

/// Raised when an operation is not supported by a recommender (e.g. training
/// a count-based model).
class UnsupportedOperation : public std::logic_error {
 public:
  explicit UnsupportedOperation(const std::string& what) : std::logic_error(what) {}
};

/// Raised when an episode is driven past its terminal step.
class IllegalState : public std::logic_error {
 public:
  explicit IllegalState(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite values reached a numeric routine.
class NumericError : public std::domain_error {
 public:
  explicit NumericError(const std::string& what) : std::domain_error(what) {}
};

/// The exact solver refuses sessions longer than its configured limit.
class LengthLimitError : public std::length_error {
 public:
  explicit LengthLimitError(const std::string& what) : std::length_error(what) {}
};

/// Input data is malformed or unusable.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Ingestion or filtering left nothing to work with.
class EmptyDatasetError : public DataError {
 public:
  explicit EmptyDatasetError(const std::string& what) : DataError(what) {}
};

}  // namespace cf2rec

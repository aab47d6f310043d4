#pragma once

#include <stdexcept>
#include <string>

namespace fairscope {

// Raised for malformed input data or a model that cannot be fitted.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Design matrix does not have full column rank.
class RankDeficiencyError : public DataError {
 public:
  RankDeficiencyError(const std::string& column, const std::string& what)
      : DataError(what), column_(column) {}

  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

// Logistic fit diverged because the classes are (quasi-)separable.
class SeparationError : public DataError {
 public:
  using DataError::DataError;
};

class ConvergenceError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace fairscope

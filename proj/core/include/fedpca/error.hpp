#pragma once

#include <stdexcept>
#include <string>

namespace fedpca {

// Violated precondition on shapes, ranges or labels.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid experiment or scenario configuration. The message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every client was left without data in an aggregation round.
class NoTrainableDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside an iterative fit (k-means, EM).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace fedpca

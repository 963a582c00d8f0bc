#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace xgp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Factorization failures and non-finite intermediate results. Carries the
// jitter levels that were attempted before giving up (empty when jitter is
// not applicable).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, std::vector<double> attempted_jitter = {})
      : Error(what), attempted_jitter_(std::move(attempted_jitter)) {}

  const std::vector<double>& attempted_jitter() const noexcept { return attempted_jitter_; }

 private:
  std::vector<double> attempted_jitter_;
};

}  // namespace xgp

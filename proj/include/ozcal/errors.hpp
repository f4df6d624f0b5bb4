#pragma once

#include <stdexcept>
#include <string>

namespace ozcal {

// CLI exit-code mapping: input_error -> 2, data_error -> 3,
// numerical_error -> 4.

/// Bad arguments to an operation (dimension mismatch, out-of-range level).
class input_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, record linkage).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure that survives the standard stabilizations
/// (e.g. Cholesky breakdown after jitter, non-finite start state).
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ozcal

#pragma once

#include <stdexcept>
#include <string>

namespace netmix {

/// Malformed or inconsistent input data (files, covariates, dimensions).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad model specification or request (unknown term, rank deficiency, ...).
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative fit did not converge; the message carries the trace tail.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Presence model cannot be fitted because the response is (quasi-)separated.
class SeparationError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

}  // namespace netmix

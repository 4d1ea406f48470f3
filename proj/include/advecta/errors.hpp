#pragma once

#include <stdexcept>
#include <string>

namespace advecta {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent or malformed configuration (odd grid, bad matrix, missing key).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Complex spectrum that cannot come from a real field.
class InvalidSpectrumError : public Error {
 public:
  using Error::Error;
};

/// Input data that does not agree with the model (grid mismatch, time spacing).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a breakdown in a numerical routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Singular linear system inside the Kalman update or likelihood.
class SolverError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace advecta

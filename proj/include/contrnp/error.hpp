#pragma once

#include <stdexcept>
#include <string>

namespace contrnp {

// Every error raised by the library derives from Error. The CLI maps the
// three families below onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, configuration keys or command usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data: CSV files, checkpoints, shapes.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not conform for the requested op.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite losses, math domain violations and degenerate metric inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Misuse of the gradient tape (no tape, non-scalar loss, double backward).
class TapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace contrnp

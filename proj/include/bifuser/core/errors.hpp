#pragma once

#include <stdexcept>
#include <string>

namespace bifuser {

/// Base for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad inputs, configs or data files. CLI maps these to exit code 1.
struct ValidationError : Error {
  using Error::Error;
};

/// Failures of the run itself (I/O, divergence). CLI maps these to exit code 2.
struct RuntimeFailure : Error {
  using Error::Error;
};

struct ShapeMismatch : ValidationError {
  using ValidationError::ValidationError;
};
struct DimNotDivisible : ValidationError {
  using ValidationError::ValidationError;
};
struct NotDivisible : ValidationError {
  using ValidationError::ValidationError;
};
struct TooSmallForDepth : ValidationError {
  using ValidationError::ValidationError;
};
struct NonFiniteInput : ValidationError {
  using ValidationError::ValidationError;
};
struct LengthMismatch : ValidationError {
  using ValidationError::ValidationError;
};
struct MismatchedShapes : ValidationError {
  using ValidationError::ValidationError;
};
struct AllBackground : ValidationError {
  using ValidationError::ValidationError;
};
struct ConfigInfeasible : ValidationError {
  using ValidationError::ValidationError;
};
struct MissingFile : ValidationError {
  using ValidationError::ValidationError;
};
struct BadRow : ValidationError {
  using ValidationError::ValidationError;
};
struct BadConfig : ValidationError {
  using ValidationError::ValidationError;
};

struct IOError : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct Diverged : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace bifuser

#pragma once

#include <stdexcept>
#include <string>

namespace relm {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents are zero, inconsistent, or mismatched between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// CSV ingestion failed (missing file, missing column, unparsable cell).
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Series too short for the requested window, or degenerate after splitting.
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Non-finite inputs or an unrecoverable numerical failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Back substitution hit a diagonal entry below the singularity threshold.
class SingularTriangularError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Least-squares system with fewer rows than unknowns.
class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

/// Worker pool could not be created or a worker failed.
class ExecutionError : public Error {
 public:
  using Error::Error;
};

/// A closed form or mode is not defined for the requested configuration.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Model or plan file is malformed or truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Model file written with an unknown format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Iterative training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace relm

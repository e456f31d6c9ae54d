#pragma once

#include <stdexcept>
#include <string>

namespace xgait {

// Base of all xgait errors. CLI maps subtrees to exit codes:
// UsageError -> 2, DataError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

// representations
struct EmptyForeground : DataError {
  using DataError::DataError;
};
struct ShapeMismatch : DataError {
  using DataError::DataError;
};
struct InvalidTarget : DataError {
  using DataError::DataError;
};

// synthgait
struct DegenerateGeometry : DataError {
  using DataError::DataError;
};
struct IOFailure : DataError {
  using DataError::DataError;
};

// dataset
struct LayoutError : DataError {
  using DataError::DataError;
};
struct ModalityMismatch : DataError {
  using DataError::DataError;
};
struct InsufficientSubjects : DataError {
  using DataError::DataError;
};
struct SplitError : DataError {
  using DataError::DataError;
};

// model / losses
struct ShapeError : Error {
  using Error::Error;
};
struct ScaleError : Error {
  using Error::Error;
};
struct HeightTooSmall : Error {
  using Error::Error;
};
struct DegenerateBatch : Error {
  using Error::Error;
};
struct LabelOutOfRange : Error {
  using Error::Error;
};
struct DimMismatch : Error {
  using Error::Error;
};
struct NoValidQueries : DataError {
  using DataError::DataError;
};

}  // namespace xgait

#pragma once

#include <stdexcept>
#include <string>

namespace ratlesnet {

// Root of every error the library throws. The CLI maps subclasses onto exit
// codes, so new error kinds should derive from the closest existing one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data and format problems (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};
class FormatError : public DataError {
 public:
  using DataError::DataError;
};
class UnsupportedError : public DataError {
 public:
  using DataError::DataError;
};
class LengthError : public DataError {
 public:
  using DataError::DataError;
};
class LabelError : public DataError {
 public:
  using DataError::DataError;
};
class DegenerateVolumeError : public DataError {
 public:
  using DataError::DataError;
};
class GenerationError : public DataError {
 public:
  using DataError::DataError;
};
class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Misuse of an API contract (non-scalar loss, mismatched optimizer state, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};
class StateError : public ContractError {
 public:
  using ContractError::ContractError;
};
class UnsupportedOpError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Invalid run configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a forward or backward pass (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ratlesnet

#pragma once

#include <stdexcept>
#include <string>

namespace volfilter {

// All library failures derive from Error so callers can map them onto exit
// codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that violate a domain invariant (model, stats, paths, ticks, config).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidModel : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class InvalidStats : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class InvalidPath : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// A time gap beyond the precomputed structure-table horizon.
class HorizonExceeded : public Error {
 public:
  using Error::Error;
};

class TableTooLarge : public Error {
 public:
  using Error::Error;
};

// Table / tick file problems.
class FileError : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public FileError {
 public:
  using FileError::FileError;
};

class VersionMismatch : public FileError {
 public:
  using FileError::FileError;
};

class ModelHashMismatch : public FileError {
 public:
  using FileError::FileError;
};

// Numeric degeneracy that cannot be absorbed by a fallback.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateDenominator : public NumericError {
 public:
  using NumericError::NumericError;
};

class ParticleCollapse : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace volfilter

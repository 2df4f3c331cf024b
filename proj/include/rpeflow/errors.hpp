#pragma once

#include <stdexcept>
#include <string>

namespace rpeflow {

// Error hierarchy used across the library. Each maps to one failure class
// named in the module contracts; all carry a human-readable message.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible shapes, axes, or extents.
struct ShapeError : Error {
  using Error::Error;
};

// Domain violations of elementwise math (log of negative, div by zero, ...).
struct DomainError : Error {
  using Error::Error;
};

// Geometric preconditions (point behind camera, empty point set, ...).
struct GeometryError : Error {
  using Error::Error;
};

// Invalid configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data (non-finite frames, bad files, ...).
struct DataError : Error {
  using Error::Error;
};

// Filesystem failures, always carrying the offending path.
struct IoError : Error {
  using Error::Error;
};

// Violated inter-module contract (missing loss term, checkpoint mismatch).
struct ContractError : Error {
  using Error::Error;
};

// Evaluation over an empty valid set.
struct EvalError : Error {
  using Error::Error;
};

}  // namespace rpeflow

#pragma once

#include <stdexcept>
#include <string>

namespace mctnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration (rejected before any compute).
struct ConfigError : Error {
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar loss).
struct UsageError : Error {
  using Error::Error;
};

// Malformed user data (masks, datasets).
struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace mctnet

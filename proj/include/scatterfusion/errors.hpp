#pragma once

#include <stdexcept>
#include <string>

namespace scatterfusion {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreements between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Filter support too large or signal too short.
struct SupportError : Error {
  using Error::Error;
};

// Violated operation precondition.
struct ContractError : Error {
  using Error::Error;
};

// NaN/Inf where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

// Malformed input data (CSV cells, timestamps, split sizes).
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// File IO and serialization failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace scatterfusion

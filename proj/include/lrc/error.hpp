#pragma once

#include <stdexcept>
#include <string>

namespace lrc {

// Base of every error thrown by the library. Each subclass corresponds to one
// failure category so callers (and the CLI's exit-code mapping) can dispatch.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar parameter is outside its domain (temperature <= 0, empty negatives, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Call made in the wrong state (double backward, use after consume).
class StateError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition (non-scalar loss, missing negatives).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed user data: token id out of range, bad one-hot, empty dataset.
class InputError : public Error {
 public:
  using Error::Error;
};

// Value outside the numeric domain (zero norm, non-finite loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lrc

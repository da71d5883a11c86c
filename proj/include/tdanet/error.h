#pragma once

#include <stdexcept>
#include <string>

namespace tdanet {

// Root of every error raised by the library. The CLI maps the subclasses to
// exit codes (config/usage/file problems -> 2, everything else -> 1).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters or option values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad user-supplied data (lengths, sample rates, zero-energy signals).
class InputError : public Error {
 public:
  using Error::Error;
};

// Operation invoked on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by a primitive while finiteness checks are on.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (WAV chunks, manifests, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing or unwritable file.
class FileError : public Error {
 public:
  using Error::Error;
};

}  // namespace tdanet

#pragma once

#include <stdexcept>
#include <string>

namespace sps {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent configuration, shape mismatch between config and data, or
/// an unknown parameter name.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller handed in data that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Corpus generation cannot satisfy the requested geometry.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// An image/mask directory could not be ingested.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or was asked to do something impossible.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sps

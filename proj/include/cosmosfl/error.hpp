#pragma once

#include <stdexcept>
#include <string>

namespace cosmosfl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed documents, violated invariants, invalid plans.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (unreadable inputs, unwritable output directories).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A model endpoint could not be reached within its retry budget.
class EndpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace cosmosfl

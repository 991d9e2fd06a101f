#pragma once

#include <stdexcept>
#include <string>

namespace covseg {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad invocation: unknown option, malformed config value.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable input (file, directory, manifest).
class InputError : public Error {
 public:
  using Error::Error;
};

// Input that exists but violates a data contract: mixed series, orphan
// annotations, out-of-range intensities, malformed headers.
class DataError : public Error {
 public:
  using Error::Error;
};

// Shape or precondition violation inside the numeric core.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Training aborted (non-finite loss and similar).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace covseg

#pragma once

#include <stdexcept>
#include <string>

namespace motiongen {

// Base class for all library errors. Subclasses exist so callers can
// distinguish bad inputs from bad files without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition or out-of-contract argument.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent serialized data (scenario JSON, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace motiongen

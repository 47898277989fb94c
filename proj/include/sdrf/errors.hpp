#pragma once

#include <stdexcept>
#include <string>

namespace sdrf {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Volume file errors are distinct types so callers can tell a malformed
// header from a short read.
struct VvolError : IoError {
  using IoError::IoError;
};
struct VvolBadMagic : VvolError {
  using VvolError::VvolError;
};
struct VvolBadHeader : VvolError {
  using VvolError::VvolError;
};
struct VvolTruncated : VvolError {
  using VvolError::VvolError;
};
struct VvolPayloadMismatch : VvolError {
  using VvolError::VvolError;
};

}  // namespace sdrf

#pragma once

#include <stdexcept>
#include <string>

namespace lfr {

/// Precondition or argument violation (dimension mismatch, bad counts, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operating-system level I/O failure (open/read/write).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally broken file: bad magic, truncation, corrupt counts.
/// The message names the offending field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Readable file with an unsupported format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Operation attempted on an object in the wrong state (e.g. unbuilt index).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace lfr

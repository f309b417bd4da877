#pragma once

#include <stdexcept>
#include <string>

namespace tap {

/// A file exists but carries the wrong kind or version.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened for reading or writing.
class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tap

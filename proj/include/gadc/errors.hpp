#pragma once

#include <stdexcept>
#include <string>

namespace gadc {

/// Malformed or out-of-range configuration (scenario files, CLI flags, specs).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint whose format version or tensor shapes do not match the model.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gadc

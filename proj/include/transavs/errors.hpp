#pragma once

#include <stdexcept>

namespace transavs {

/// Shape or dimension contract violated.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Bad caller-supplied option (mode string, config key, flag value).
class UsageError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// File missing, unreadable, unwritable or malformed.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace transavs

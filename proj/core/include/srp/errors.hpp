#pragma once

#include <stdexcept>
#include <string>

namespace srp {

/// Malformed schema descriptors, configuration files or invalid arguments.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Problems with the data itself: missing files, bad headers, key violations.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace srp

#pragma once

#include <stdexcept>
#include <string>

namespace shortcot {

// Error families map one-to-one onto CLI exit codes (see tools/shortcot.cpp).

/// Bad configuration: unknown key, invalid strategy name, unknown category.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or mismatched data: truncated checkpoints, dimension mismatch.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values reaching a numeric routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace shortcot

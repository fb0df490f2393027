#pragma once

#include <stdexcept>
#include <string>

namespace varreg {

// Operands disagree on grid geometry or channel layout.
class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition on a scalar parameter or configuration is violated.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed, truncated or otherwise unreadable file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared where finite data is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace varreg

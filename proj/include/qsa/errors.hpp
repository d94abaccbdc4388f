#pragma once

#include <stdexcept>
#include <string>

namespace qsa {

/// Thrown when tensor extents are incompatible with an operation.
class ShapeMismatch : public std::invalid_argument {
 public:
  explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown for out-of-range scalar arguments (non-positive scales, zero dims, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace qsa

#pragma once

#include <stdexcept>
#include <string>

namespace vemlab {

/// Invalid argument: bad counts, out-of-range hyperparameters, dimension
/// mismatches.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// An operation was called on an object that is not ready for it, e.g.
/// advantages requested before planned returns exist.
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// Malformed or incompatible file contents.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vemlab

#pragma once

#include <stdexcept>
#include <string>

namespace cdgc {

/// Tensor dimension mismatch; message names the offending shapes.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration (layer spec, output size, geometry, unknown variant).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid data content (labels out of range, empty evaluation, ...).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (bad argument ranges, non-scalar backward, ...).
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or numeric breakdown; message names the operation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// A class with no support nodes was handed to a graph operation.
/// Callers substitute an all-zero slice for such classes.
class EmptyClassError : public std::runtime_error {
 public:
  explicit EmptyClassError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cdgc

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hgf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or argument shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (hop count, head count, truncation k, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Skeleton graph that violates the tree/connectivity invariants.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Problems reading or interpreting data on disk or in memory.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeOverflowError : public DataError {
 public:
  using DataError::DataError;
};

/// A joint at or behind the camera plane.
class ProjectionError : public DataError {
 public:
  ProjectionError(const std::string& what, std::size_t frame)
      : DataError(what), frame_(frame) {}
  std::size_t frame() const noexcept { return frame_; }

 private:
  std::size_t frame_;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace hgf

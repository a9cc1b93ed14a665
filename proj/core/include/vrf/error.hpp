// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vrf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Tensor or index file is malformed (bad magic, truncation, overflow, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Manifest or sidecar JSON does not match the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Arrays that must be aligned have incompatible shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on values was violated (NaN input, zero-norm row, out-of-range
/// weight, degenerate calibration set, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Query against an index with no members.
class EmptyIndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace vrf

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace layoutforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes disagree (grid sides, token counts, latent extents).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A map or mask with no mass where mass is required.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// NaN / infinity in an input.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad arguments to an operation (empty subject set, gamma outside (0, 1), ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (imputation mode without a background token, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed exchange tensor file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace layoutforge

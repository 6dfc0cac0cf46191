#pragma once

#include <stdexcept>
#include <string>

namespace gapnas {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy a primitive's shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A loss, gradient or statistic became non-finite, or a numerical
/// precondition (PSD, positive temperature, ...) was violated.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, genotype text or file contents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gapnas

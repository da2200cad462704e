#pragma once

#include <stdexcept>
#include <string>

namespace pctrl {

// Base of everything the library throws. The C API maps each subclass onto a
// pctrl_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Natural-gradient step is undefined (g'F^-1 g <= 0 or non-finite). The
// training loop treats this as "skip this update".
class DegenerateStepError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pctrl

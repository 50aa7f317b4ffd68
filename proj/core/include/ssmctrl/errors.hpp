#pragma once

#include <stdexcept>
#include <string>

namespace ssmctrl {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An ODE integration or closed-loop recursion produced non-finite or
// divergent values.
class NumericalBlowUp : public Error {
 public:
  using Error::Error;
};

// Invalid arguments, mismatched dimensions or violated type invariants.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A scaffolding whose derivative vanishes or changes sign somewhere.
class NotBiLipschitz : public Error {
 public:
  NotBiLipschitz(const std::string& what, double lo, double hi)
      : Error(what), interval_lo(lo), interval_hi(hi) {}
  double interval_lo;
  double interval_hi;
};

// Malformed or inconsistent pipeline configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage could not run or failed its gate.
class StageError : public Error {
 public:
  using Error::Error;
};

// Loaded artifact violates an invariant of its type.
class IntegrityError : public StageError {
 public:
  using StageError::StageError;
};

}  // namespace ssmctrl

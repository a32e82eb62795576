#pragma once

#include <stdexcept>
#include <string>

namespace cbo {

// Root of every error raised by the library. The CLI maps subclasses onto
// process exit codes (config 2, numeric 3, io 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A box side has zero width, so the log-barrier has no interior there.
class DegenerateBoxError : public Error {
 public:
  using Error::Error;
};

// A barrier quantity was requested at a point on or outside the box.
class BoundaryViolation : public Error {
 public:
  using Error::Error;
};

// Non-finite values, overflow, or otherwise unusable arithmetic.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Iterative linear solve did not converge or hit negative curvature.
class SolverFailure : public NumericError {
 public:
  SolverFailure(const std::string& what, double residual_norm)
      : NumericError(what), residual_norm_(residual_norm) {}

  double residual_norm() const { return residual_norm_; }

 private:
  double residual_norm_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbo

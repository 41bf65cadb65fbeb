#pragma once

#include <stdexcept>
#include <string>

namespace magcath {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, out-of-range arguments, unknown names.
struct InputError : Error {
  using Error::Error;
};

struct NonFiniteError : Error {
  using Error::Error;
};

// Boundary Jacobian too ill-conditioned to invert.
struct SingularJacobianError : Error {
  SingularJacobianError(const std::string& what, double cond)
      : Error(what), condition(cond) {}
  double condition;
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, double residual)
      : Error(what), best_residual(residual) {}
  double best_residual;
};

}  // namespace magcath

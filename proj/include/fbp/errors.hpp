#ifndef FBP_ERRORS_HPP
#define FBP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fbp {

/// Invalid user-supplied configuration (bad mesh size, invalid exponents, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical operation produced an unusable result (singular solve, non-finite value).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Argument outside the domain of definition (e.g. interpolant time out of range).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Nonlinear solve failed after Newton and the fixed-point fallback.
class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, double residual, int iterations, int step_index = -1)
      : NumericalError(what), residual(residual), iterations(iterations), step_index(step_index) {}

  double residual;
  int iterations;
  int step_index;  // -1 when not attached to a trajectory step
};

}  // namespace fbp

#endif

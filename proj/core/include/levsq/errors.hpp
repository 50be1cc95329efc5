#pragma once

#include <stdexcept>
#include <string>

namespace levsq {

// Base class for everything this library throws on purpose.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A physical parameter or operation argument violates its contract.
class invalid_parameter_error : public error {
 public:
  using error::error;
};

// Configuration file / command line problems. Mapped to exit code 2 by the
// CLI, everything else below maps to exit code 3.
class config_error : public error {
 public:
  using error::error;
};

// A Gaussian state violated the uncertainty bound beyond tolerance.
class physicality_error : public error {
 public:
  using error::error;
};

// No stable optical trap exists for the requested beam configuration
// (scattering force exceeds the gradient force, or curvature not confining).
class no_trap_error : public error {
 public:
  using error::error;
};

// Quadrature / root finding / integration failed to converge.
class numerical_error : public error {
 public:
  using error::error;
};

}  // namespace levsq

#pragma once

#include <array>

#include "levsq/params.hpp"

namespace levsq {

// Relative tolerance on the uncertainty determinant. Absorbs integrator
// roundoff: every state produced by this library satisfies
//   V_xx V_pp - C_xp^2 >= (hbar^2/4) (1 - physicality_tol).
inline constexpr double physicality_tol = 1e-9;

// One motional axis of the sphere, fully characterized by its first two
// cumulants. Units: m, kg m/s and their squares/products.
struct AxisGaussianState {
  double mean_x = 0.0;
  double mean_p = 0.0;
  double var_x = 0.0;   // V_xx
  double var_p = 0.0;   // V_pp
  double cov_xp = 0.0;  // C_xp

  double uncertainty_det() const { return var_x * var_p - cov_xp * cov_xp; }
};

// The three axes evolve without cross-correlations: neither the optical
// potential nor any of the implemented dissipators couples them, so a 6x6
// covariance matrix would carry dead weight. Axis order: x, y, z (laser axis).
struct State3D {
  std::array<AxisGaussianState, 3> axes;
};

struct SqueezeMetrics {
  Vec3 squeezing_db;    // positive = momentum variance below hbar m omega/2
  Vec3 var_p_absolute;  // kg^2 m^2 / s^2
  Vec3 purity;          // hbar / (2 sqrt(det)), in (0, 1]
};

// Purity of one axis; 1 for a pure (minimum-uncertainty-saturating) state.
double purity(const AxisGaussianState& s);

// Throws physicality_error if the axis violates the uncertainty bound beyond
// physicality_tol or carries non-finite entries. `context` tags the message.
void check_physical(const AxisGaussianState& s, const char* context);
void check_physical(const State3D& s, const char* context);

// The motional ground state of a harmonic trap: V_xx = hbar/(2 m omega),
// V_pp = hbar m omega / 2, no correlations, zero means.
State3D ground_state(double mass, const Vec3& omega);

// Squeezing is measured against the zero-point momentum variance of the
// reference (stiff-trap) frequency of each axis:
//   squeezing_db = 10 log10( (hbar m omega_ref/2) / V_pp ).
// Positive dB therefore means variance reduction below zero point.
SqueezeMetrics squeeze_metrics(const State3D& s, double mass,
                               const Vec3& omega_ref);

}  // namespace levsq

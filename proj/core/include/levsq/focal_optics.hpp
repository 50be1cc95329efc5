#pragma once

#include <array>
#include <complex>

#include "levsq/params.hpp"

namespace levsq {

// Dipole response of a sub-wavelength sphere: Clausius-Mossotti real part
// alpha1 and the radiation-reaction imaginary part alpha2 = k^3 alpha1^2 /
// (6 pi eps0). Both in F m^2.
struct Polarizability {
  double alpha1 = 0;
  double alpha2 = 0;
  // Scattering cross section sigma = alpha2 k / eps0, m^2.
  double cross_section(double wavenumber) const;
};

Polarizability polarizability(const ExperimentParams& p);

enum class Polarization { circular, linear_x };

struct BeamConfig {
  double numerical_aperture = 0.85;
  double wavelength = 1550e-9;
  double power = 1.0;           // W delivered through the focus
  double filling_factor = 1.0;  // input waist over aperture radius
  Polarization polarization = Polarization::circular;
  int quad_nodes = 64;          // aperture-angle quadrature order
};

// Vector focal field of an aplanatic lens, assembled from the three
// azimuthal aperture integrals with sqrt(cos) apodization and a Gaussian
// pupil. Complex peak amplitudes in V/m under the exp(-i w t) convention;
// the optical axis is z and the focus sits at the origin.
class FocalField {
 public:
  // Throws numerical_error if the quadrature self-check (node doubling at
  // probe points near the focus) misses 1e-6 relative agreement.
  explicit FocalField(const BeamConfig& beam);

  std::array<std::complex<double>, 3> sample(const Vec3& r) const;

  // |E|^2 summed over components, V^2/m^2.
  double intensity(const Vec3& r) const;

  // eps0 c |E|^2 / 2, W/m^2; the scale that feeds scattering rates.
  double irradiance(const Vec3& r) const;

  // Time-averaged axial Poynting component, W/m^2.
  double axial_poynting(const Vec3& r) const;

  // Flux through the transverse plane at height z out to radius r_max,
  // by annular quadrature with `subdivisions` radial panels. Converges to
  // the configured beam power as r_max grows.
  double transmitted_power(double z, double r_max, int subdivisions = 400) const;

  const BeamConfig& beam() const { return beam_; }
  double wavenumber() const { return k_; }

  // The three radial aperture integrals (I_00, I_01, I_02) at (rho, z).
  std::array<std::complex<double>, 3> radial_integrals(double rho,
                                                       double z) const;

 private:
  BeamConfig beam_;
  double k_ = 0;
  double amp_ = 0;  // overall normalization, V/m

  std::array<std::complex<double>, 3> integrals_with_nodes(double rho,
                                                           double z,
                                                           int nodes) const;
};

// Angular distribution of scattered photons and the per-axis mean squared
// momentum-transfer projections <q_i^2> (in units of k^2) it induces,
// counting both the absorbed and the emitted photon direction.
enum class ScatterModel {
  axial_dipole,     // w = 3 cos^2(theta) / 4pi
  circular_dipole,  // w = 3 (1 + cos^2(theta)) / 16pi
};

struct ScatterPattern {
  Vec3 qsq_over_k2 = {0, 0, 0};
  double norm = 0;  // integral of w over the sphere, should be 1
};

// Evaluates <q_i^2> = Int dOmega (k'_i^2 + k_i^2 - 2 k'_i k_i) w(Omega)
// with incident direction z, by direct 2-D quadrature of the chosen
// pattern (no closed forms baked in, so the integral doubles as a check
// on the normalization).
ScatterPattern scatter_pattern(ScatterModel model = ScatterModel::axial_dipole);

struct TrapCharacterization {
  Vec3 equilibrium = {0, 0, 0};      // m, relative to the focus
  std::array<Vec3, 3> stiffness{};   // N/m, -dF_i/dx_j at equilibrium
  Vec3 trap_freqs = {0, 0, 0};       // rad/s, (x, y, z)
  double focal_intensity = 0;        // W/m^2 at the equilibrium point
  Vec3 recoil_rates = {0, 0, 0};     // s^-1 at the trap frequencies
  double power = 0;                  // W, after any power calibration
};

// Time-averaged optical force on the dipole at r: gradient part from
// alpha1 plus the scattering push from alpha2. Field derivatives by
// central differences of the sampler with step wavelength/2000.
Vec3 optical_force(const FocalField& field, const Polarizability& pol,
                   const Vec3& r);

// Axial equilibrium: root of F_z on the optical axis within 2 wavelengths
// of the focus (the scattering force pushes it downstream of the
// intensity maximum). Transverse components vanish by symmetry. Throws
// no_trap_error when no restoring root exists in the bracket.
Vec3 find_equilibrium(const FocalField& field, const Polarizability& pol);

// Equilibrium, stiffness matrix by central differences of the force,
// trap frequencies from its eigenvalues, focal intensity and recoil
// rates. With p.solve_power set, the beam power is calibrated so the
// axial frequency matches p.long_freq (stiffness is linear in power, so
// one rescale is exact); otherwise beam.power is used as given.
TrapCharacterization trap_characterization(
    const ExperimentParams& p, const BeamConfig& beam,
    ScatterModel model = ScatterModel::axial_dipole);

// Photon-recoil localization rates
//   Gamma_i = I0 sigma k^2 <q_i^2> / (2 m w_laser w_i),
// from the local irradiance I0 in W/m^2.
Vec3 recoil_heating_rates(double irradiance, const Polarizability& pol,
                          double wavelength, double mass,
                          const Vec3& trap_freqs,
                          const ScatterPattern& pattern);

// Closed-form recoil rates for a weakly focused beam of divergence NA:
//   Gamma_i = 3 NA^2 P w_L^7 V c_i (eps_r - 1)^2
//             / (8 pi^2 rho w_i (2 + eps_r)^2 c^8),
// with c_i = (1, 2, 7)/5. Valid for NA well below 0.3 (a warning entry in
// params.validate covers the regime); useful as a low-aperture limit for
// the full calculation.
Vec3 recoil_low_na(const ExperimentParams& p, double na, double power,
                   const Vec3& trap_freqs);

// Numerical aperture in [na_lo, na_hi] at which the transverse-to-axial
// trap-frequency ratio crosses target_ratio (the ratio is independent of
// power, so the search runs at fixed 1 W).
double find_na_for_ratio(const ExperimentParams& p, double target_ratio,
                         double na_lo, double na_hi,
                         ScatterModel model = ScatterModel::axial_dipole);

}  // namespace levsq

#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

namespace levsq {

using Vec3 = std::array<double, 3>;

// Axis convention used everywhere: index 0 = x, 1 = y (transverse),
// 2 = z (the laser propagation axis).
inline constexpr int axis_x = 0;
inline constexpr int axis_y = 1;
inline constexpr int axis_z = 2;

// The single source of physical inputs for a run. SI units throughout.
struct ExperimentParams {
  double sphere_radius = 80e-9;        // m
  double wavelength = 1550e-9;         // m
  double long_freq = 2 * 3.14159265358979323846 * 50e3;  // rad/s, target omega_z
  std::complex<double> dielectric_const = {2.07, 1e-10};
  double density = 2000.0;             // kg/m^3
  double bb_absorption = 0.1;          // Im[(eps_bb-1)/(eps_bb+2)]
  double gas_pressure = 1e-8;          // Pa
  double gas_temperature = 300.0;      // K
  double gas_molecule_mass = 3.35e-27; // kg, molecular hydrogen
  double internal_temperature = 200.0; // K; an input, never computed here
  double numerical_aperture = 0.85;
  double laser_power = 0.0;            // W; ignored when solve_power is set
  double filling_factor = 1.0;         // input beam waist / aperture radius
  Vec3 measurement_efficiency = {0.2, 0.2, 0.2};

  // When true, the trap solver picks the laser power that reproduces
  // long_freq on the z axis; laser_power then records the solved value.
  bool solve_power = true;

  // The reference parameter set (see presets/table1.cfg).
  static ExperimentParams table1();

  // Throws invalid_parameter_error on hard violations; returns soft warnings
  // (e.g. the sphere radius approaching the dipole-approximation limit).
  std::vector<std::string> validate() const;
};

// Scales derived from the parameters plus the realized trap frequencies.
struct DerivedScales {
  double mass;               // kg
  Vec3 zero_point_length;    // m, sqrt(hbar/(m omega_i))
  Vec3 zero_point_momentum;  // kg m/s, sqrt(hbar m omega_i)
  Vec3 sql_impulse;          // kg m/s, sqrt(hbar m omega_i)
};

double sphere_volume(const ExperimentParams& p);  // m^3
double sphere_mass(const ExperimentParams& p);    // kg

// Pure; throws invalid_parameter_error if any frequency is not positive.
DerivedScales derive_scales(const ExperimentParams& p, const Vec3& trap_freqs);

}  // namespace levsq

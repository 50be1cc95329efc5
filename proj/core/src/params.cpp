#include "levsq/params.hpp"

#include <cmath>
#include <sstream>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

ExperimentParams ExperimentParams::table1() {
  // Defaults are already the reference set; spelled out here so the preset
  // stays meaningful if the defaults ever drift.
  ExperimentParams p;
  p.sphere_radius = 80e-9;
  p.wavelength = 1550e-9;
  p.long_freq = 2 * pi * 50e3;
  p.dielectric_const = {2.07, 1e-10};
  p.density = 2000.0;
  p.bb_absorption = 0.1;
  p.gas_pressure = 1e-8;  // 1e-10 mbar
  p.gas_temperature = 300.0;
  p.gas_molecule_mass = 3.35e-27;
  p.internal_temperature = 200.0;
  p.numerical_aperture = 0.85;
  p.laser_power = 0.0;
  p.solve_power = true;
  p.filling_factor = 1.0;
  p.measurement_efficiency = {0.2, 0.2, 0.2};
  return p;
}

std::vector<std::string> ExperimentParams::validate() const {
  auto fail = [](const std::string& msg) {
    throw invalid_parameter_error("params: " + msg);
  };
  if (!(sphere_radius > 0)) fail("sphere_radius must be positive");
  if (!(wavelength > 0)) fail("wavelength must be positive");
  if (!(long_freq > 0)) fail("long_freq must be positive");
  if (!(density > 0)) fail("density must be positive");
  if (!(gas_pressure > 0)) fail("gas_pressure must be positive");
  if (!(gas_temperature > 0)) fail("gas_temperature must be positive");
  if (!(gas_molecule_mass > 0)) fail("gas_molecule_mass must be positive");
  if (!(internal_temperature > 0)) fail("internal_temperature must be positive");
  if (!(numerical_aperture > 0 && numerical_aperture < 1))
    fail("numerical_aperture must lie in (0, 1)");
  if (!(filling_factor > 0)) fail("filling_factor must be positive");
  if (!(dielectric_const.real() > 1))
    fail("Re(dielectric_const) must exceed 1 for a trappable particle");
  if (bb_absorption < 0) fail("bb_absorption must be non-negative");
  if (laser_power < 0) fail("laser_power must be non-negative");
  if (!solve_power && laser_power == 0)
    fail("laser_power must be set when solve_power is off");
  for (double eta : measurement_efficiency) {
    if (!(eta >= 0 && eta <= 1))
      fail("measurement_efficiency must lie in [0, 1]");
  }

  std::vector<std::string> warnings;
  if (sphere_radius >= wavelength / 5) {
    std::ostringstream os;
    os << "sphere_radius " << sphere_radius << " m is not small against the "
       << "wavelength (R < lambda/5 expected); the point-dipole force and "
       << "recoil formulas degrade in this regime";
    warnings.push_back(os.str());
  }
  return warnings;
}

double sphere_volume(const ExperimentParams& p) {
  return 4.0 / 3.0 * pi * p.sphere_radius * p.sphere_radius * p.sphere_radius;
}

double sphere_mass(const ExperimentParams& p) {
  return sphere_volume(p) * p.density;
}

DerivedScales derive_scales(const ExperimentParams& p, const Vec3& trap_freqs) {
  for (double w : trap_freqs) {
    if (!(w > 0))
      throw invalid_parameter_error(
          "derive_scales: trap frequencies must be positive");
  }
  DerivedScales d;
  d.mass = sphere_mass(p);
  for (int i = 0; i < 3; ++i) {
    d.zero_point_length[i] = std::sqrt(constants.hbar / (d.mass * trap_freqs[i]));
    d.zero_point_momentum[i] = std::sqrt(constants.hbar * d.mass * trap_freqs[i]);
    d.sql_impulse[i] = d.zero_point_momentum[i];
  }
  return d;
}

}  // namespace levsq

#include "levsq/decoherence.hpp"

#include <cmath>
#include <sstream>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

namespace {

// The blackbody-band response enters every emission formula only through
// Im[(eps_bb - 1)/(eps_bb + 2)], and the trapping-band permittivity says
// nothing about the far infrared, so the parameter carries that imaginary
// part directly.
double bb_susceptibility_im(const ExperimentParams& p) {
  return p.bb_absorption;
}

}  // namespace

double blackbody_decoherence_rate(const ExperimentParams& p, double x0) {
  if (!(x0 > 0)) {
    throw invalid_parameter_error(
        "blackbody_decoherence_rate: x0 must be positive");
  }
  const double kT = constants.kB * p.internal_temperature;
  const double hbar_c = constants.hbar * constants.c;
  // (4 pi^4 / 63) V x0^2 (kT/hbar c)^6 c Im[(eps-1)/(eps+2)]
  const double photon_scale = std::pow(kT / hbar_c, 6);
  return (4.0 * std::pow(pi, 4) / 63.0) * sphere_volume(p) * x0 * x0 *
         photon_scale * constants.c * bb_susceptibility_im(p);
}

double blackbody_emission_rate(const ExperimentParams& p) {
  const double kT = constants.kB * p.internal_temperature;
  const double hbar_c = constants.hbar * constants.c;
  // (72 zeta(5) / pi^2) V (kT/hbar c)^4 c Im[(eps-1)/(eps+2)]
  const double photon_scale = std::pow(kT / hbar_c, 4);
  return (72.0 * zeta5 / (pi * pi)) * sphere_volume(p) * photon_scale *
         constants.c * bb_susceptibility_im(p);
}

double gas_collision_rate(const ExperimentParams& p) {
  // n <sigma v> with n = P/(kB T), sigma = pi R^2 /4 geometric cross
  // section folded with the Maxwell-Boltzmann mean speed:
  //   rate = P R^2 sqrt(pi / (2 m_gas kB T)).
  const double R = p.sphere_radius;
  return p.gas_pressure * R * R *
         std::sqrt(pi / (2.0 * p.gas_molecule_mass * constants.kB *
                         p.gas_temperature));
}

double collision_probability(const ExperimentParams& p, double duration) {
  if (duration < 0) {
    throw invalid_parameter_error("collision_probability: negative duration");
  }
  return -std::expm1(-gas_collision_rate(p) * duration);
}

DecoherenceBudget assemble_budget(const Vec3& recoil,
                                  const ExperimentParams& p,
                                  const DerivedScales& scales) {
  DecoherenceBudget b;
  b.recoil = recoil;
  b.blackbody =
      blackbody_decoherence_rate(p, scales.zero_point_length[axis_z]);
  b.gas_collision = gas_collision_rate(p);
  for (int i = 0; i < 3; ++i) {
    if (recoil[i] < 0) {
      throw invalid_parameter_error("assemble_budget: negative recoil rate");
    }
    b.total_trap_on[i] = recoil[i] + b.blackbody;
    b.total_trap_off[i] = b.blackbody;
  }
  {
    std::ostringstream note;
    note.precision(6);
    note << "gas collisions excluded from the diffusive totals; rate "
         << b.gas_collision
         << " /s acts as a per-shot loss channel (each hit transfers far "
            "more than a zero-point momentum)";
    b.notes.push_back(note.str());
  }
  if (b.blackbody > 0.01 * std::min({recoil[0], recoil[1], recoil[2]})) {
    b.notes.push_back(
        "blackbody channel is not negligible against photon recoil");
  }
  return b;
}

double blackbody_momentum_diffusion(const ExperimentParams& p,
                                    const DerivedScales& scales,
                                    double omega_ref) {
  if (!(omega_ref > 0)) {
    throw invalid_parameter_error(
        "blackbody_momentum_diffusion: omega_ref must be positive");
  }
  const double x0 = std::sqrt(constants.hbar / (scales.mass * omega_ref));
  return constants.hbar * scales.mass * omega_ref *
         blackbody_decoherence_rate(p, x0);
}

}  // namespace levsq

#pragma once

#include <string>
#include <vector>

#include "levsq/params.hpp"

namespace levsq {

// Blackbody-photon localization rate at zero-point scale x0, in s^-1.
// Scattering of thermal photons is negligible next to emission for a
// sphere much hotter than its surroundings, so only the emitted-photon
// channel enters.
double blackbody_decoherence_rate(const ExperimentParams& p, double x0);

// Total blackbody photon emission rate of the heated sphere, s^-1.
double blackbody_emission_rate(const ExperimentParams& p);

// Background-gas collision rate, s^-1. A single collision delivers far
// more momentum than a zero-point quantum, so this sets a survival
// probability for the protocol rather than a diffusion term.
double gas_collision_rate(const ExperimentParams& p);

// Probability that at least one gas collision lands within `duration`.
double collision_probability(const ExperimentParams& p, double duration);

struct DecoherenceBudget {
  Vec3 recoil = {0, 0, 0};      // photon-recoil localization rates, s^-1
  double blackbody = 0;         // emitted-photon localization rate, s^-1
  double gas_collision = 0;     // collision rate, s^-1
  Vec3 total_trap_on = {0, 0, 0};
  Vec3 total_trap_off = {0, 0, 0};
  std::vector<std::string> notes;
};

// Collects every modeled channel at the zero-point scale of the long axis.
// Trap-on totals add recoil and blackbody; trap-off drops recoil (no
// light on the sphere). Gas collisions are reported separately, with a
// note, because they knock the sphere out of the trapping volume instead
// of diffusing it.
DecoherenceBudget assemble_budget(const Vec3& recoil,
                                  const ExperimentParams& p,
                                  const DerivedScales& scales);

// Momentum diffusion coefficient fed by the trap-off blackbody channel,
// kg^2 m^2 / s^3: D = hbar m omega_ref Gamma_bb.
double blackbody_momentum_diffusion(const ExperimentParams& p,
                                    const DerivedScales& scales,
                                    double omega_ref);

}  // namespace levsq

// Decoherence channel tests.
//
// Oracle notes:
//  - Gas collisions: the implementation folds n = P/(kB T) with the
//    projected-disc cross section pi R^2/4 and the Maxwell-Boltzmann mean
//    speed sqrt(8 kB T / (pi m_gas)), which algebraically collapses to
//    P R^2 sqrt(pi/(2 m_gas kB T)). Both routes are evaluated here and the
//    magnitude is anchored to the ~20 Hz benchmark for molecular hydrogen
//    at 1e-8 Pa and 300 K against an 80 nm sphere.
//  - Blackbody emission of a hot dielectric sphere: photon rate scales as
//    V T^4 (quartic spectral integral), the position-localization rate as
//    V x0^2 T^6 (two extra powers from the photon momentum transfer).
//    Magnitude anchors at 200 K internal temperature: ~2.8e7 photons/s and
//    ~1.4e-5 1/s localization at the 50 kHz zero-point scale; both carry
//    the far-infrared response Im[(eps-1)/(eps+2)] = 0.1 linearly.
//  - Trap-off momentum diffusion is D = hbar m w_ref Gamma_bb by
//    definition of the localization rate at the reference zero point.

#include "doctest.h"

#include <cmath>

#include "levsq/constants.hpp"
#include "levsq/decoherence.hpp"
#include "levsq/errors.hpp"
#include "levsq/params.hpp"

using namespace levsq;

namespace {

double x0_long(const ExperimentParams& p) {
  const double m = sphere_mass(p);
  return std::sqrt(constants.hbar / (m * p.long_freq));
}

}  // namespace

TEST_CASE("gas collision rate matches the kinetic-theory route") {
  const ExperimentParams p = ExperimentParams::table1();

  // Independent evaluation: number density times <sigma v>.
  const double kT = constants.kB * p.gas_temperature;
  const double n = p.gas_pressure / kT;
  const double vbar = std::sqrt(8.0 * kT / (pi * p.gas_molecule_mass));
  const double sigma = pi * p.sphere_radius * p.sphere_radius / 4.0;
  const double route_b = n * sigma * vbar;

  const double rate = gas_collision_rate(p);
  CHECK(rate == doctest::Approx(route_b).epsilon(1e-12));
  CHECK(rate == doctest::Approx(21.53).epsilon(1e-3));
  // Within the benchmark window around 20 Hz.
  CHECK(rate > 15.0);
  CHECK(rate < 25.0);
}

TEST_CASE("collision probability is the exponential complement") {
  const ExperimentParams p = ExperimentParams::table1();
  const double rate = gas_collision_rate(p);
  CHECK(collision_probability(p, 0.0) == doctest::Approx(0.0));
  CHECK(collision_probability(p, 1.0 / rate) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  const double t_small = 1e-6;
  CHECK(collision_probability(p, t_small) ==
        doctest::Approx(rate * t_small).epsilon(1e-4));
  CHECK_THROWS_AS(collision_probability(p, -1.0), invalid_parameter_error);
}

TEST_CASE("blackbody emission rate: magnitude and scaling") {
  ExperimentParams p = ExperimentParams::table1();
  const double rate = blackbody_emission_rate(p);
  CHECK(rate == doctest::Approx(2.830e7).epsilon(1e-3));

  ExperimentParams hot = p;
  hot.internal_temperature = 2.0 * p.internal_temperature;
  CHECK(blackbody_emission_rate(hot) ==
        doctest::Approx(16.0 * rate).epsilon(1e-12));

  ExperimentParams absorbing = p;
  absorbing.bb_absorption = 2.0 * p.bb_absorption;
  CHECK(blackbody_emission_rate(absorbing) ==
        doctest::Approx(2.0 * rate).epsilon(1e-12));
}

TEST_CASE("blackbody localization rate: magnitude and scaling") {
  ExperimentParams p = ExperimentParams::table1();
  const double x0 = x0_long(p);
  const double rate = blackbody_decoherence_rate(p, x0);
  CHECK(rate == doctest::Approx(1.381e-5).epsilon(1e-3));

  // Quadratic in the probed length scale (localization regime).
  CHECK(blackbody_decoherence_rate(p, 2.0 * x0) ==
        doctest::Approx(4.0 * rate).epsilon(1e-12));

  ExperimentParams hot = p;
  hot.internal_temperature = 2.0 * p.internal_temperature;
  CHECK(blackbody_decoherence_rate(hot, x0) ==
        doctest::Approx(64.0 * rate).epsilon(1e-12));

  CHECK_THROWS_AS(blackbody_decoherence_rate(p, 0.0),
                  invalid_parameter_error);
}

TEST_CASE("trap-off momentum diffusion ties to the localization rate") {
  const ExperimentParams p = ExperimentParams::table1();
  const double m = sphere_mass(p);
  const double wz = p.long_freq;
  const Vec3 freqs = {3 * wz, 3 * wz, wz};
  const DerivedScales scales = derive_scales(p, freqs);

  const double d = blackbody_momentum_diffusion(p, scales, wz);
  const double gamma =
      blackbody_decoherence_rate(p, scales.zero_point_length[axis_z]);
  CHECK(d == doctest::Approx(constants.hbar * m * wz * gamma).epsilon(1e-12));
  CHECK(d > 1e-51);
  CHECK(d < 3e-51);
}

TEST_CASE("budget assembly sums the channels by trap state") {
  const ExperimentParams p = ExperimentParams::table1();
  const double wz = p.long_freq;
  const Vec3 freqs = {3 * wz, 3 * wz, wz};
  const DerivedScales scales = derive_scales(p, freqs);
  const Vec3 recoil = {4000.0, 4000.0, 90000.0};

  const DecoherenceBudget b = assemble_budget(recoil, p, scales);
  CHECK(b.blackbody ==
        doctest::Approx(
            blackbody_decoherence_rate(p, scales.zero_point_length[axis_z]))
            .epsilon(1e-12));
  CHECK(b.gas_collision == doctest::Approx(gas_collision_rate(p)).epsilon(1e-12));
  for (int i = 0; i < 3; ++i) {
    CHECK(b.recoil[i] == doctest::Approx(recoil[i]));
    CHECK(b.total_trap_on[i] ==
          doctest::Approx(recoil[i] + b.blackbody).epsilon(1e-12));
    CHECK(b.total_trap_off[i] == doctest::Approx(b.blackbody).epsilon(1e-12));
    // Light off means photon recoil gone: the trap-off total must sit
    // far below the trap-on total for any realistic recoil.
    CHECK(b.total_trap_off[i] < 1e-3 * b.total_trap_on[i]);
  }
  CHECK(!b.notes.empty());
}

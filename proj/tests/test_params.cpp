// Parameter and derived-scale tests.
//
// Oracle values recomputed by hand from the defining formulas (CODATA-2018
// hbar = 1.054571817e-34 J s):
//   V     = (4 pi / 3) R^3            R = 80 nm        -> 2.144661e-21 m^3
//   m     = rho V                     rho = 2000 kg/m^3 -> 4.289321e-18 kg
//   x0    = sqrt(hbar / (m omega))    omega = 2 pi 50 kHz -> 8.84643e-12 m
//   p0    = sqrt(hbar m omega)                           -> 1.1920852e-23 kg m/s
// The p0 value doubles as the standard-quantum-limit impulse reference.

#include "doctest.h"

#include <cmath>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"
#include "levsq/params.hpp"

using namespace levsq;

TEST_CASE("sphere volume and mass follow the geometric formulas") {
  ExperimentParams p = ExperimentParams::table1();
  const double v_expect =
      4.0 / 3.0 * pi * std::pow(p.sphere_radius, 3);
  CHECK(sphere_volume(p) == doctest::Approx(v_expect).epsilon(1e-14));
  CHECK(sphere_volume(p) == doctest::Approx(2.144661e-21).epsilon(1e-6));
  CHECK(sphere_mass(p) == doctest::Approx(p.density * v_expect).epsilon(1e-14));
  CHECK(sphere_mass(p) == doctest::Approx(4.289321e-18).epsilon(1e-6));
}

TEST_CASE("derived scales reproduce the zero-point formulas") {
  ExperimentParams p = ExperimentParams::table1();
  const double wz = 2.0 * pi * 50e3;
  const Vec3 freqs = {3.0 * wz, 3.0 * wz, wz};
  const DerivedScales s = derive_scales(p, freqs);

  const double m = sphere_mass(p);
  CHECK(s.mass == doctest::Approx(m).epsilon(1e-14));
  for (int i = 0; i < 3; ++i) {
    CHECK(s.zero_point_length[i] ==
          doctest::Approx(std::sqrt(constants.hbar / (m * freqs[i])))
              .epsilon(1e-13));
    CHECK(s.zero_point_momentum[i] ==
          doctest::Approx(std::sqrt(constants.hbar * m * freqs[i]))
              .epsilon(1e-13));
    // The impulse reference is the zero-point momentum by definition.
    CHECK(s.sql_impulse[i] == s.zero_point_momentum[i]);
  }
  CHECK(s.zero_point_length[axis_z] ==
        doctest::Approx(8.84643e-12).epsilon(1e-5));
  CHECK(s.zero_point_momentum[axis_z] ==
        doctest::Approx(1.1920852e-23).epsilon(1e-6));
}

TEST_CASE("derive_scales rejects non-positive frequencies") {
  ExperimentParams p = ExperimentParams::table1();
  CHECK_THROWS_AS(derive_scales(p, Vec3{1.0, 0.0, 1.0}),
                  invalid_parameter_error);
  CHECK_THROWS_AS(derive_scales(p, Vec3{1.0, 1.0, -2.0}),
                  invalid_parameter_error);
}

TEST_CASE("validate flags hard violations and warns about big spheres") {
  ExperimentParams p = ExperimentParams::table1();
  CHECK(p.validate().empty());

  SUBCASE("non-positive radius") {
    p.sphere_radius = 0.0;
    CHECK_THROWS_AS(p.validate(), invalid_parameter_error);
  }
  SUBCASE("aperture outside (0,1)") {
    p.numerical_aperture = 1.0;
    CHECK_THROWS_AS(p.validate(), invalid_parameter_error);
  }
  SUBCASE("efficiency outside [0,1]") {
    p.measurement_efficiency[1] = 1.5;
    CHECK_THROWS_AS(p.validate(), invalid_parameter_error);
  }
  SUBCASE("fixed power requires a power value") {
    p.solve_power = false;
    p.laser_power = 0.0;
    CHECK_THROWS_AS(p.validate(), invalid_parameter_error);
  }
  SUBCASE("sub-unity permittivity cannot trap") {
    p.dielectric_const = {0.9, 0.0};
    CHECK_THROWS_AS(p.validate(), invalid_parameter_error);
  }
  SUBCASE("dipole-limit warning for a large sphere") {
    p.sphere_radius = p.wavelength / 4.0;
    const auto warnings = p.validate();
    REQUIRE(!warnings.empty());
    CHECK(warnings.front().find("dipole") != std::string::npos);
  }
}

TEST_CASE("reference preset carries the documented experiment") {
  const ExperimentParams p = ExperimentParams::table1();
  CHECK(p.sphere_radius == doctest::Approx(80e-9));
  CHECK(p.wavelength == doctest::Approx(1550e-9));
  CHECK(p.long_freq == doctest::Approx(2.0 * pi * 50e3));
  CHECK(p.density == doctest::Approx(2000.0));
  CHECK(p.gas_pressure == doctest::Approx(1e-8));
  CHECK(p.internal_temperature == doctest::Approx(200.0));
  CHECK(p.numerical_aperture == doctest::Approx(0.85));
  CHECK(p.solve_power);
}

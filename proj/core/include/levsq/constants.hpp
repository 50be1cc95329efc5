#pragma once

namespace levsq {

// Fixed CODATA-2018 values, SI units. All internal computation is SI with
// explicit hbar and eps0; natural-unit formulas from the optics literature
// are converted at the point of use and documented there.
struct PhysicalConstants {
  double hbar;    // J s
  double c;       // m/s
  double eps0;    // F/m
  double kB;      // J/K
  double g_grav;  // m/s^2
};

inline constexpr PhysicalConstants constants{
    1.054571817e-34,   // hbar (exact since the 2019 SI via h)
    2.99792458e8,      // c (exact)
    8.8541878128e-12,  // eps0
    1.380649e-23,      // kB (exact)
    9.80665,           // standard gravity
};

// Riemann zeta(5), used by the blackbody photon emission rate.
inline constexpr double zeta5 = 1.0369277551433699;

// Vacuum impedance 1/(eps0 c), ohms.
inline constexpr double vacuum_impedance =
    1.0 / (constants.eps0 * constants.c);

inline constexpr double pi = 3.14159265358979323846;

}  // namespace levsq

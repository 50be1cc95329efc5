// Gaussian state tests.
//
// Oracles are textbook single-mode results: the harmonic ground state has
// V_xx = hbar/(2 m w), V_pp = hbar m w / 2, saturating V_xx V_pp = hbar^2/4;
// a thermal state scales both variances by (1 + 2 n) and has purity
// 1/(1 + 2 n) = hbar / (2 sqrt(det V)).

#include "doctest.h"

#include <cmath>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"
#include "levsq/gaussian_state.hpp"

using namespace levsq;

namespace {

const double kMass = 4.289321e-18;
const Vec3 kOmega = {2 * pi * 150e3, 2 * pi * 150e3, 2 * pi * 50e3};

}  // namespace

TEST_CASE("ground state saturates the uncertainty bound with purity one") {
  const State3D g = ground_state(kMass, kOmega);
  const double hbar = constants.hbar;
  for (int i = 0; i < 3; ++i) {
    const auto& ax = g.axes[i];
    CHECK(ax.var_x == doctest::Approx(hbar / (2 * kMass * kOmega[i])).epsilon(1e-14));
    CHECK(ax.var_p == doctest::Approx(hbar * kMass * kOmega[i] / 2).epsilon(1e-14));
    CHECK(ax.cov_xp == 0.0);
    CHECK(ax.mean_x == 0.0);
    CHECK(ax.uncertainty_det() ==
          doctest::Approx(hbar * hbar / 4).epsilon(1e-14));
    CHECK(purity(ax) == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK_NOTHROW(check_physical(g, "test"));
}

TEST_CASE("thermal scaling gives purity 1/(1+2n)") {
  State3D s = ground_state(kMass, kOmega);
  const double n = 3.7;
  for (auto& ax : s.axes) {
    ax.var_x *= 1 + 2 * n;
    ax.var_p *= 1 + 2 * n;
  }
  for (const auto& ax : s.axes)
    CHECK(purity(ax) == doctest::Approx(1.0 / (1 + 2 * n)).epsilon(1e-13));
}

TEST_CASE("physicality check rejects sub-Heisenberg and non-finite states") {
  State3D s = ground_state(kMass, kOmega);

  SUBCASE("well below the bound") {
    s.axes[0].var_p *= 0.5;
    CHECK_THROWS_AS(check_physical(s, "test"), physicality_error);
  }
  SUBCASE("just below the tolerance window") {
    s.axes[1].var_p *= 1.0 - 10 * physicality_tol;
    CHECK_THROWS_AS(check_physical(s, "test"), physicality_error);
  }
  SUBCASE("within the tolerance window") {
    s.axes[1].var_p *= 1.0 - 0.1 * physicality_tol;
    CHECK_NOTHROW(check_physical(s, "test"));
  }
  SUBCASE("correlations count against the determinant") {
    s.axes[2].cov_xp = 0.5 * constants.hbar;
    CHECK_THROWS_AS(check_physical(s, "test"), physicality_error);
  }
  SUBCASE("non-finite entries") {
    s.axes[0].mean_x = std::nan("");
    CHECK_THROWS_AS(check_physical(s, "test"), physicality_error);
  }
}

TEST_CASE("squeeze metrics measure momentum variance against zero point") {
  State3D s = ground_state(kMass, kOmega);
  // A 4x momentum-variance reduction is 10 log10(4) = 6.0206 dB.
  s.axes[axis_z].var_p /= 4.0;
  s.axes[axis_z].var_x *= 4.0;
  const SqueezeMetrics m = squeeze_metrics(s, kMass, kOmega);
  CHECK(m.squeezing_db[axis_z] == doctest::Approx(6.0205999).epsilon(1e-7));
  CHECK(m.squeezing_db[axis_x] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.var_p_absolute[axis_z] ==
        doctest::Approx(constants.hbar * kMass * kOmega[axis_z] / 8)
            .epsilon(1e-13));
  // Ideal squeezing preserves purity.
  CHECK(m.purity[axis_z] == doctest::Approx(1.0).epsilon(1e-13));

  // Heating shows up as negative dB.
  s.axes[axis_x].var_p *= 10.0;
  const SqueezeMetrics m2 = squeeze_metrics(s, kMass, kOmega);
  CHECK(m2.squeezing_db[axis_x] == doctest::Approx(-10.0).epsilon(1e-9));
}

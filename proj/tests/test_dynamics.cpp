// Covariance dynamics tests.
//
// Oracle notes:
//  - The odd-quarter-period map is checked against the adaptive integrator,
//    two fully independent code paths for the same flow.
//  - Measurement backaction feeds momentum diffusion D = hbar m w gamma
//    into V_pp alone; over whole trap periods the harmonic rotation shares
//    it evenly between the quadratures, so V_pp and (m w)^2 V_xx both gain
//    exactly D/2 per unit time at eta = 0 (exact at integer periods, no
//    small-gamma expansion involved).
//  - Ballistic spreading with constant momentum diffusion D has the exact
//    closed form V_pp += D t, C += V_pp t/m + D t^2/(2m),
//    V_xx += 2Ct/m + V_pp t^2/m^2 + D t^3/(3 m^2); the cubic term makes
//    consecutive expansions compose exactly (semigroup property).
//  - A continuously measured oscillator at efficiency eta settles into a
//    conditional steady state of purity sqrt(eta); at Gamma/w = 0.1 the
//    residual periodic breathing sits at the percent level, hence the 2%
//    window on that check.

#include "doctest.h"

#include <cmath>
#include <random>

#include "levsq/constants.hpp"
#include "levsq/dynamics.hpp"
#include "levsq/errors.hpp"
#include "levsq/gaussian_state.hpp"

using namespace levsq;

namespace {

constexpr double kMass = 4.289321e-18;

AxisGaussianState random_axis_state(std::mt19937_64& rng, double mass,
                                    double omega) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double hbar = constants.hbar;
  const double x0sq = hbar / (mass * omega);
  const double p0sq = hbar * mass * omega;
  // Rotated squeezed thermal state: always physical by construction.
  const double nt = 3.0 * u(rng);
  const double r = 2.0 * u(rng) - 1.0;
  const double th = 2.0 * pi * u(rng);
  const double c = std::cos(th), s = std::sin(th);
  const double er = std::exp(r), emr = std::exp(-r);
  AxisGaussianState ax;
  const double scale = 0.5 * (1.0 + 2.0 * nt);
  ax.var_x = scale * (c * c * er + s * s * emr) * x0sq;
  ax.var_p = scale * (s * s * er + c * c * emr) * p0sq;
  ax.cov_xp = scale * (c * s * (er - emr)) * hbar;
  ax.mean_x = (2.0 * u(rng) - 1.0) * 3.0 * std::sqrt(x0sq);
  ax.mean_p = (2.0 * u(rng) - 1.0) * 3.0 * std::sqrt(p0sq);
  return ax;
}

State3D random_state(std::mt19937_64& rng, double mass, const Vec3& omega) {
  State3D s;
  for (int i = 0; i < 3; ++i)
    s.axes[i] = random_axis_state(rng, mass, omega[i]);
  return s;
}

// Relative agreement with a floor scale, so near-zero cumulants compare
// against their natural magnitude instead of against zero.
void check_close(double a, double b, double scale, double tol) {
  const double denom = std::max({std::abs(a), std::abs(b), scale});
  CHECK(std::abs(a - b) <= tol * denom);
}

void check_axis_close(const AxisGaussianState& a, const AxisGaussianState& b,
                      double mass, double omega, double tol) {
  const double hbar = constants.hbar;
  const double x0sq = hbar / (mass * omega);
  const double p0sq = hbar * mass * omega;
  check_close(a.var_x, b.var_x, x0sq, tol);
  check_close(a.var_p, b.var_p, p0sq, tol);
  check_close(a.cov_xp, b.cov_xp, hbar, tol);
  check_close(a.mean_x, b.mean_x, std::sqrt(x0sq), tol);
  check_close(a.mean_p, b.mean_p, std::sqrt(p0sq), tol);
}

ScheduleSegment constant_segment(double omega, double gamma, double eta,
                                 double duration) {
  ScheduleSegment seg;
  seg.duration = duration;
  seg.omega = {omega, omega, omega};
  seg.gamma = {gamma, gamma, gamma};
  seg.eta = {eta, eta, eta};
  return seg;
}

}  // namespace

TEST_CASE("odd-quarter analytic map matches the adaptive integrator") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 12; ++draw) {
    const double omega =
        2.0 * pi * std::exp(std::log(1e4) + u(rng) * std::log(30.0));
    const double gamma = 0.5 * omega * u(rng) * u(rng);
    const int nq = 1 + 2 * (draw % 3);
    ScheduleSegment seg =
        constant_segment(omega, gamma, 0.0, nq * pi / (2.0 * omega));

    const State3D in = random_state(rng, kMass, seg.omega);
    const State3D analytic = propagate_quarter_analytic(in, seg, kMass);
    const State3D numeric = integrate_covariances(in, seg, kMass);
    for (int i = 0; i < 3; ++i)
      check_axis_close(analytic.axes[i], numeric.axes[i], kMass, omega, 1e-8);
  }
}

TEST_CASE("backaction heats each quadrature at half the diffusion rate") {
  const double omega = 2.0 * pi * 50e3;
  const double gamma = 1e-3 * omega;
  const int periods = 10;
  const double t = periods * 2.0 * pi / omega;
  ScheduleSegment seg = constant_segment(omega, gamma, 0.0, t);

  const State3D in = ground_state(kMass, seg.omega);
  const State3D out = integrate_covariances(in, seg, kMass);

  const double slope_expect = constants.hbar * kMass * omega * gamma / 2.0;
  for (int i = 0; i < 3; ++i) {
    const double slope_p =
        (out.axes[i].var_p - in.axes[i].var_p) / t;
    const double slope_x = (out.axes[i].var_x - in.axes[i].var_x) / t *
                           (kMass * omega) * (kMass * omega);
    CHECK(slope_p == doctest::Approx(slope_expect).epsilon(1e-6));
    CHECK(slope_x == doctest::Approx(slope_expect).epsilon(1e-6));
  }
}

TEST_CASE("free expansion composes as a semigroup") {
  std::mt19937_64 rng(7);
  const Vec3 omega = {2 * pi * 150e3, 2 * pi * 150e3, 2 * pi * 50e3};
  const State3D s = random_state(rng, kMass, omega);
  const double d_bb = 1.96e-51;
  const double dt1 = 0.31e-3, dt2 = 0.47e-3;

  const State3D two_steps =
      free_expansion(free_expansion(s, dt1, d_bb, kMass), dt2, d_bb, kMass);
  const State3D one_step = free_expansion(s, dt1 + dt2, d_bb, kMass);
  for (int i = 0; i < 3; ++i)
    check_axis_close(two_steps.axes[i], one_step.axes[i], kMass, omega[i],
                     1e-12);
}

TEST_CASE("free expansion drifts ballistically, with gravity if asked") {
  std::mt19937_64 rng(8);
  const Vec3 omega = {2 * pi * 150e3, 2 * pi * 150e3, 2 * pi * 50e3};
  State3D s = random_state(rng, kMass, omega);
  const double dt = 0.8e-3;
  const double g = constants.g_grav;

  const State3D out = free_expansion(s, dt, 0.0, kMass, true, axis_x);
  CHECK(out.axes[axis_x].mean_p ==
        doctest::Approx(s.axes[axis_x].mean_p - kMass * g * dt).epsilon(1e-12));
  CHECK(out.axes[axis_x].mean_x ==
        doctest::Approx(s.axes[axis_x].mean_x +
                        s.axes[axis_x].mean_p / kMass * dt - 0.5 * g * dt * dt)
            .epsilon(1e-10));
  // The non-vertical axes ignore gravity.
  CHECK(out.axes[axis_z].mean_p == doctest::Approx(s.axes[axis_z].mean_p));
  CHECK(out.axes[axis_z].mean_x ==
        doctest::Approx(s.axes[axis_z].mean_x +
                        s.axes[axis_z].mean_p / kMass * dt)
            .epsilon(1e-12));
}

TEST_CASE("trap-off integration reproduces the ballistic closed form") {
  std::mt19937_64 rng(21);
  const double omega_ref = 2.0 * pi * 50e3;
  const double gamma_bb = 1.4e-5;
  const Vec3 omega = {omega_ref, omega_ref, omega_ref};
  const State3D in = random_state(rng, kMass, omega);

  ScheduleSegment seg;
  seg.duration = 1e-4;
  seg.trap_on = false;
  seg.gamma = {gamma_bb, gamma_bb, gamma_bb};
  seg.omega_ref = omega;

  const double d_bb = constants.hbar * kMass * omega_ref * gamma_bb;
  const State3D numeric = integrate_covariances(in, seg, kMass);
  const State3D closed = free_expansion(in, seg.duration, d_bb, kMass);
  for (int i = 0; i < 3; ++i)
    check_axis_close(numeric.axes[i], closed.axes[i], kMass, omega_ref, 1e-10);
}

TEST_CASE("noise-free evolution is symplectic") {
  std::mt19937_64 rng(31);
  const double omega = 2.0 * pi * 80e3;
  ScheduleSegment seg =
      constant_segment(omega, 0.0, 0.0, 1.37 * 2.0 * pi / omega);
  const State3D in = random_state(rng, kMass, seg.omega);
  const State3D out = integrate_covariances(in, seg, kMass);
  for (int i = 0; i < 3; ++i) {
    CHECK(out.axes[i].uncertainty_det() ==
          doctest::Approx(in.axes[i].uncertainty_det()).epsilon(1e-10));
    CHECK(purity(out.axes[i]) == doctest::Approx(purity(in.axes[i])).epsilon(1e-10));
    // Means follow the exact harmonic rotation.
    const double t = seg.duration;
    const double c = std::cos(omega * t), s = std::sin(omega * t);
    const double x_expect = in.axes[i].mean_x * c +
                            in.axes[i].mean_p / (kMass * omega) * s;
    const double p_expect =
        -kMass * omega * in.axes[i].mean_x * s + in.axes[i].mean_p * c;
    check_close(out.axes[i].mean_x, x_expect,
                std::sqrt(constants.hbar / (kMass * omega)), 1e-9);
    check_close(out.axes[i].mean_p, p_expect,
                std::sqrt(constants.hbar * kMass * omega), 1e-9);
  }
}

TEST_CASE("analytic propagator enforces its contract") {
  const double omega = 2.0 * pi * 50e3;
  const State3D in = ground_state(kMass, {omega, omega, omega});

  SUBCASE("conditioned segments are out of scope") {
    ScheduleSegment seg =
        constant_segment(omega, 0.0, 0.2, pi / (2.0 * omega));
    CHECK_THROWS_AS(propagate_quarter_analytic(in, seg, kMass),
                    invalid_parameter_error);
  }
  SUBCASE("even quarter counts are out of scope") {
    ScheduleSegment seg = constant_segment(omega, 0.0, 0.0, pi / omega);
    CHECK_THROWS_AS(propagate_quarter_analytic(in, seg, kMass),
                    invalid_parameter_error);
  }
  SUBCASE("off-grid durations are rejected") {
    ScheduleSegment seg =
        constant_segment(omega, 0.0, 0.0, 1.1 * pi / (2.0 * omega));
    CHECK_THROWS_AS(propagate_quarter_analytic(in, seg, kMass),
                    invalid_parameter_error);
  }
}

TEST_CASE("conditioning settles at the efficiency-limited purity") {
  const double omega = 2.0 * pi * 50e3;
  const double eta = 0.5;
  ScheduleSegment seg = constant_segment(omega, 0.1 * omega, eta,
                                         120.0 * 2.0 * pi / omega);
  const State3D out =
      integrate_covariances(ground_state(kMass, seg.omega), seg, kMass);
  for (int i = 0; i < 3; ++i)
    CHECK(purity(out.axes[i]) ==
          doctest::Approx(std::sqrt(eta)).epsilon(0.02));
}

TEST_CASE("gravity shifts the trapped oscillation on the vertical axis") {
  const double omega = 2.0 * pi * 50e3;
  const double period = 2.0 * pi / omega;
  const double xc = constants.g_grav / (omega * omega);
  const State3D in = ground_state(kMass, {omega, omega, omega});

  ScheduleSegment half = constant_segment(omega, 0.0, 0.0, period / 2.0);
  half.gravity_on = true;
  half.vertical_axis = axis_x;
  const State3D mid = integrate_covariances(in, half, kMass);
  // Released at the trap center, the mean swings to twice the sag.
  CHECK(mid.axes[axis_x].mean_x == doctest::Approx(-2.0 * xc).epsilon(1e-9));
  CHECK(mid.axes[axis_y].mean_x == doctest::Approx(0.0));

  ScheduleSegment full = half;
  full.duration = period;
  const State3D back = integrate_covariances(in, full, kMass);
  CHECK(back.axes[axis_x].mean_x == doctest::Approx(0.0).epsilon(1e-9 * xc));
}

TEST_CASE("segment validation rejects broken inputs") {
  ScheduleSegment seg = constant_segment(1e5, 0.0, 0.0, 1.0);
  SUBCASE("negative duration") {
    seg.duration = -1.0;
    CHECK_THROWS_AS(seg.validate(), invalid_parameter_error);
  }
  SUBCASE("trap off cannot carry a measurement") {
    seg.trap_on = false;
    seg.eta = {0.1, 0, 0};
    CHECK_THROWS_AS(seg.validate(), invalid_parameter_error);
  }
  SUBCASE("trap-off decoherence needs a reference frequency") {
    seg.trap_on = false;
    seg.gamma = {1.0, 1.0, 1.0};
    CHECK_THROWS_AS(seg.validate(), invalid_parameter_error);
    seg.omega_ref = {1e5, 1e5, 1e5};
    CHECK_NOTHROW(seg.validate());
  }
  SUBCASE("unphysical input states are caught at entry") {
    State3D bad = ground_state(kMass, seg.omega);
    bad.axes[0].var_p *= 0.2;
    CHECK_THROWS_AS(integrate_covariances(bad, seg, kMass),
                    physicality_error);
  }
}

TEST_CASE("halving the step ceiling leaves the result unchanged") {
  std::mt19937_64 rng(55);
  const double omega = 2.0 * pi * 50e3;
  const double period = 2.0 * pi / omega;
  ScheduleSegment seg =
      constant_segment(omega, 0.05 * omega, 0.2, 3.0 * period);
  const State3D in = random_state(rng, kMass, seg.omega);

  IntegratorOptions coarse, fine;
  coarse.dt_max = period / 40.0;
  fine.dt_max = period / 80.0;
  const State3D a = integrate_covariances(in, seg, kMass, coarse);
  const State3D b = integrate_covariances(in, seg, kMass, fine);
  for (int i = 0; i < 3; ++i)
    check_axis_close(a.axes[i], b.axes[i], kMass, omega, 1e-9);
}

TEST_CASE("stochastic sampler enforces the step-size contract") {
  const double omega = 2.0 * pi * 50e3;
  const double period = 2.0 * pi / omega;
  Schedule sched;
  sched.segments.push_back(constant_segment(omega, 0.05 * omega, 0.2, period));
  const State3D in = ground_state(kMass, sched.segments[0].omega);
  CHECK_THROWS_AS(
      stochastic_trajectory(in, sched, kMass, period / 100.0, 1),
      invalid_parameter_error);
}

TEST_CASE("stochastic trajectories are reproducible and seed-sensitive") {
  const double omega = 2.0 * pi * 50e3;
  const double period = 2.0 * pi / omega;
  Schedule sched;
  sched.segments.push_back(
      constant_segment(omega, 0.1 * omega, 0.2, 2.0 * period));
  sched.segments.push_back(
      constant_segment(0.5 * omega, 0.05 * omega, 0.2, period));
  sched.segments.back().omega_ref = {omega, omega, omega};
  const State3D in = ground_state(kMass, sched.segments[0].omega);
  const double dt = period / 400.0;

  const TrajectoryRecord a = stochastic_trajectory(in, sched, kMass, dt, 42);
  const TrajectoryRecord b = stochastic_trajectory(in, sched, kMass, dt, 42);
  const TrajectoryRecord c = stochastic_trajectory(in, sched, kMass, dt, 43);

  REQUIRE(a.times.size() == b.times.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    for (int ax = 0; ax < 3; ++ax) {
      if (a.states[i].axes[ax].mean_x != b.states[i].axes[ax].mean_x ||
          a.states[i].axes[ax].mean_p != b.states[i].axes[ax].mean_p)
        identical = false;
    }
  }
  CHECK(identical);
  CHECK(a.states.back().axes[0].mean_x != c.states.back().axes[0].mean_x);
  CHECK(a.rng_seed == 42);

  // Endpoints and the segment boundary are always in the record.
  CHECK(a.times.front() == doctest::Approx(0.0));
  CHECK(a.times.back() == doctest::Approx(sched.total_duration()));
  bool boundary_found = false;
  for (double t : a.times)
    if (std::abs(t - sched.segments[0].duration) < 1e-12) boundary_found = true;
  CHECK(boundary_found);

  // Standardized innovations: one entry per step per axis, zero mean and
  // unit variance within loose Monte Carlo bounds.
  const std::size_t n_steps = a.measurement_record[0].size();
  CHECK(n_steps > 0);
  for (int ax = 0; ax < 3; ++ax) {
    REQUIRE(a.measurement_record[ax].size() == n_steps);
    double sum = 0, sumsq = 0;
    for (double w : a.measurement_record[ax]) {
      sum += w;
      sumsq += w * w;
    }
    const double mean = sum / n_steps;
    const double var = sumsq / n_steps - mean * mean;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(double(n_steps)));
    CHECK(std::abs(var - 1.0) < 0.2);
  }
}

TEST_CASE("ensemble of conditional means satisfies total variance (smoke)") {
  // Small-sample version of the release-gate check: ensemble variance of
  // the conditional means plus the (deterministic) conditional variance
  // recovers the unconditional variance, within Monte Carlo error.
  const double omega = 2.0 * pi * 50e3;
  const double period = 2.0 * pi / omega;
  ScheduleSegment seg = constant_segment(omega, 0.1 * omega, 0.2, 2.0 * period);
  Schedule sched;
  sched.segments.push_back(seg);
  const State3D in = ground_state(kMass, seg.omega);
  const double dt = period / 400.0;
  const int n_traj = 400;

  double sum_x = 0, sumsq_x = 0;
  State3D cond{};
  StochasticOptions opt;
  opt.record_innovations = false;
  for (int i = 0; i < n_traj; ++i) {
    const TrajectoryRecord tr =
        stochastic_trajectory(in, sched, kMass, dt, 1000 + i, opt);
    const auto& ax = tr.states.back().axes[axis_z];
    sum_x += ax.mean_x;
    sumsq_x += ax.mean_x * ax.mean_x;
    cond = tr.states.back();
  }
  const double mean = sum_x / n_traj;
  const double ens_var = (sumsq_x - n_traj * mean * mean) / (n_traj - 1);

  ScheduleSegment unseg = seg;
  unseg.eta = {0, 0, 0};
  const State3D uncond = integrate_covariances(in, unseg, kMass);

  const double v_unc = uncond.axes[axis_z].var_x;
  const double v_cond = cond.axes[axis_z].var_x;
  const double se = std::sqrt(2.0 / n_traj) * (v_unc - v_cond);
  CHECK(std::abs(ens_var + v_cond - v_unc) <= 4.0 * se);
}

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "levsq/gaussian_state.hpp"
#include "levsq/params.hpp"

namespace levsq {

// One piecewise-constant stretch of the control schedule.
//
// The measurement terms of the covariance flow (backaction diffusion,
// conditioning drain, innovation gain) all involve the rate gamma divided by
// a squared zero-point length x0^2 = hbar/(m omega_ref). omega_ref is NOT
// the segment frequency: in a bang-bang protocol the measurement coupling is
// referenced to the stiff trap on every segment, while `gamma` holds the
// instantaneous rate (already scaled by omega/omega_ref on soft segments,
// and the blackbody rate when the trap is off). An entry of 0 in omega_ref
// means "use the segment frequency", which is the right default for a
// standalone constant-frequency segment.
struct ScheduleSegment {
  double duration = 0.0;        // s, >= 0
  bool trap_on = true;
  Vec3 omega = {0, 0, 0};       // rad/s; ignored when the trap is off
  Vec3 gamma = {0, 0, 0};       // 1/s, instantaneous decoherence rate
  Vec3 eta = {0, 0, 0};         // measurement efficiency; 0 when trap off
  bool gravity_on = false;
  int vertical_axis = axis_x;   // axis that feels gravity (a transverse one)
  Vec3 omega_ref = {0, 0, 0};   // rad/s, zero-point reference (see above)

  // Throws invalid_parameter_error on contract violations.
  void validate() const;
  // omega_ref with zeros resolved to the segment frequency.
  double resolved_omega_ref(int axis) const;
};

struct Schedule {
  std::vector<ScheduleSegment> segments;
  double total_duration() const;
  void validate() const;
};

// Options for the deterministic covariance integrator. The defaults hold the
// relative error per segment near 1e-11, which keeps the uncertainty
// determinant conserved to ~1e-12 per segment when gamma = eta = 0.
struct IntegratorOptions {
  double rel_tol = 1e-12;
  double abs_tol = 1e-16;  // on the dimensionless cumulants (order unity)
  double dt_max = 0.0;     // s; 0 = unlimited, adaptivity rules
  // Called after every accepted step with the segment-local time and the
  // current state of the axis being integrated. Used by the test suite to
  // audit physicality along the way; leave empty in production runs.
  std::function<void(double t_local, int axis, const AxisGaussianState&)>
      step_observer;
};

// Advances covariances per axis through one segment under the conditional
// (eta-dependent) Riccati flow:
//   dV_xx/dt = 2 C/m                      - (4 eta G) V_xx^2
//   dV_pp/dt = -2 m w^2 C + hbar^2 G      - (4 eta G) C_xp^2
//   dC_xp/dt = V_pp/m - m w^2 V_xx        - (4 eta G) V_xx C_xp
// with G = gamma / x0_ref^2. Means advance by the deterministic part only
// (exact harmonic/ballistic closed forms, gravity on the vertical axis).
// Uses an embedded Dormand-Prince 5(4) pair on dimensionless cumulants.
// Throws physicality_error (with a state dump) if the uncertainty bound is
// violated at an accepted step.
State3D integrate_covariances(const State3D& state, const ScheduleSegment& seg,
                              double mass, const IntegratorOptions& opt = {});

// Analytic propagator for an odd number of quarter periods at constant
// segment frequency, valid only for unconditioned evolution (eta = 0).
//
// gamma_ref is the decoherence rate referenced to omega_ref (the rate the
// axis would have in the stiff trap); the segment's instantaneous rate is
// gamma_ref * omega_seg / omega_ref. n_quarters must be odd: 1 is a quarter
// period, 3 the three-quarter case, higher odd counts compose full periods
// on top. Over t = n pi/(2 w) the cumulant map is the quarter swap
//   V_xx <- V_pp/(m w)^2 + n pi S / (4 w (m w)^2)
//   V_pp <- (m w)^2 V_xx + n pi S / (4 w)
//   C_xp <- -C_xp        + S / (2 m w^2)
// with S = hbar m gamma_ref w the momentum diffusion source, and the means
// rotate by n quarter turns. Exact for the flow above at eta = 0.
AxisGaussianState propagate_quarter_analytic(const AxisGaussianState& in,
                                             double mass, double omega_ref,
                                             double omega_seg,
                                             double gamma_ref, int n_quarters);

// Segment-shaped wrapper over the per-axis analytic propagator. The segment
// must be trap-on with eta = 0 everywhere (contract error otherwise) and its
// duration must be an odd number of quarter periods of every axis within
// 1e-9 relative.
State3D propagate_quarter_analytic(const State3D& state,
                                   const ScheduleSegment& seg, double mass);

// Exact closed-form free expansion over dt with momentum diffusion d_bb
// (kg^2 m^2/s^3, isotropic). The cumulant update
//   V_xx += 2 dt C/m + dt^2 V_pp/m^2 + d_bb dt^3/(3 m^2)
//   C_xp += dt V_pp/m + d_bb dt^2/(2 m)
//   V_pp += d_bb dt
// forms a one-parameter semigroup: expanding by dt1 then dt2 equals
// expanding by dt1+dt2 exactly (the cubic term is what makes that work).
// Means drift ballistically; gravity pulls the vertical axis if requested.
State3D free_expansion(const State3D& state, double dt, double d_bb,
                       double mass, bool gravity_on = false,
                       int vertical_axis = axis_x);

struct TrajectoryRecord {
  std::vector<double> times;        // s, strictly increasing
  std::vector<State3D> states;      // sampled at `times`
  std::uint64_t rng_seed = 0;
  // Standardized innovations dW/sqrt(dt) per axis, one entry per E-M step.
  std::array<std::vector<double>, 3> measurement_record;
};

struct StochasticOptions {
  // Record the state at these absolute times (clamped to the schedule span);
  // segment boundaries and the endpoints are always recorded.
  std::vector<double> record_times;
  bool record_innovations = true;
  // Optional instantaneous momentum kick applied at `impulse_time`
  // (plumbing for the protocol layer's impulse injection).
  std::optional<double> impulse_time;
  Vec3 impulse_dp = {0, 0, 0};
  IntegratorOptions covariance_options;
};

// Samples one conditional trajectory by Euler-Maruyama. Covariances evolve
// deterministically (the conditional Riccati flow has no noise term); the
// conditional means pick up innovation kicks
//   d<x> += (2 sqrt(eta gamma)/x0) V_xx dW
//   d<p> += (2 sqrt(eta gamma)/x0) C_xp dW
// per axis, with independent Wiener increments and the gain evaluated at the
// step midpoint. dt must not exceed the shortest trap-on period / 200.
// Bit-reproducible for a fixed seed on a fixed build.
TrajectoryRecord stochastic_trajectory(const State3D& state,
                                       const Schedule& schedule, double mass,
                                       double dt, std::uint64_t seed,
                                       const StochasticOptions& opt = {});

}  // namespace levsq

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "levsq/dynamics.hpp"
#include "levsq/gaussian_state.hpp"
#include "levsq/params.hpp"

namespace levsq {

// Commensurability search: all axes must complete an odd number of quarter
// periods in the same wall-clock interval, i.e. the durations
// (2k_i+1) pi / (2 w_i) must coincide across axes.
struct HarmonicAssignment {
  bool satisfiable = false;
  std::array<int, 3> k = {0, 0, 0};  // quarter-period counts are 2k+1
  double residual = 0.0;  // spread of w_i/(2k_i+1), relative to its mean
};

// Exhaustive search over k_i in [0, max_k]. `residual` is
// (max - min)/mean over r_i = w_i/(2 k_i + 1); an assignment counts as
// satisfiable when the residual is below `residual_tol`. Ties on residual
// prefer the smallest k sum (shortest protocol).
HarmonicAssignment check_harmonic_condition(const Vec3& omega, int max_k,
                                            double residual_tol = 1e-6);

// Full description of a bang-bang squeezing protocol between a stiff trap
// omega_i and a soft trap omega'_i = ratio * omega_i. gamma_stiff holds the
// per-axis decoherence rate in the stiff trap; soft segments carry
// gamma_stiff * omega'/omega because the recoil rate tracks the trap
// frequency at fixed zero-point reference.
struct SqueezeProtocol {
  Vec3 omega_stiff = {0, 0, 0};
  Vec3 omega_soft = {0, 0, 0};
  std::array<int, 3> k_soft = {0, 0, 0};
  std::array<int, 3> k_stiff = {0, 0, 0};
  int n_cycles = 1;
  Vec3 eta = {0, 0, 0};
  Vec3 gamma_stiff = {0, 0, 0};

  double soft_duration() const;   // t1, common across axes
  double stiff_duration() const;  // t2, likewise
  void validate() const;          // throws invalid_parameter_error
};

// Builds a SqueezeProtocol from trap frequencies: runs the harmonic search
// for both trap configurations and validates the result. Throws
// invalid_parameter_error (with the best residual) when unsatisfiable.
SqueezeProtocol make_protocol(const Vec3& omega_stiff, double freq_ratio,
                              int n_cycles, const Vec3& eta,
                              const Vec3& gamma_stiff, int max_k = 6,
                              double residual_tol = 1e-6);

struct ProtocolTimeline {
  Schedule schedule;
  double t_off = 0;   // squeezing ends, trap switches off
  double t_on = 0;    // trap back on for the readout rotation
  double t_end = 0;   // position measurement happens here
  std::optional<double> t_kick;
  double free_fall_duration = 0;
};

// Timeline layout: a zero-duration stiff placeholder, then n_cycles soft
// segments interleaved with n_cycles-1 stiff ones (the squeezing phase ends
// on a soft segment), a trap-off stretch of `free_fall`, and a final stiff
// segment whose duration is the common odd-quarter rotation that maps the
// momentum quadrature into position for readout. gamma_bb is the per-axis
// trap-off localization rate (blackbody), referenced to the stiff trap.
ProtocolTimeline build_bangbang_schedule(const SqueezeProtocol& proto,
                                         double free_fall, bool gravity_on,
                                         const Vec3& gamma_bb = {0, 0, 0},
                                         int vertical_axis = axis_x);

// Large-cycle-count momentum variance in the soft/stiff alternation,
//   V_pp = (hbar m w/2) (pi/2) (gamma/w) (w^2 + w'^2)/(w^2 - w'^2),
// measured at the end of a soft segment. kg^2 m^2/s^2.
double asymptotic_variance(double mass, double omega, double omega_soft,
                           double gamma);

// Momentum variance after n_p quarter-period pulse cycles starting from a
// thermal occupation n_t (0 = ground state), measured at the end of the
// n_p-th soft segment. With a = (w'/w)^2:
//   V_pp = (hbar m w/2) [ a^n (1+2 n_t)
//                         + (pi/2)(gamma/w)(-1 + 2 (1-a^n)/(1-a)) ].
// Converges geometrically to asymptotic_variance for n_t = 0.
double finite_cycle_variance(double mass, double omega, double omega_soft,
                             double gamma, double n_t, int n_p);

// Shot-noise-limited uncertainty of the final position readout,
// x0 / sqrt(eta gamma_pulse t_meas).
double measurement_shot_noise(double x0, double eta, double gamma_pulse,
                              double t_meas);

struct ImpulseEvent {
  double magnitude = 0.0;  // kg m/s
  Vec3 direction = {0, 0, 1};
  double time = 0.0;       // s, within the timeline
};

struct SensingResult {
  SqueezeMetrics metrics_at_toff;
  Vec3 min_detectable_impulse = {0, 0, 0};  // kg m/s
  Vec3 db_below_sql = {0, 0, 0};
  Vec3 shot_noise = {0, 0, 0};              // m, readout position noise
  double duty_estimate = 0.0;
  // Present when an impulse was injected: the kick reconstructed from the
  // final rotated position, per axis.
  std::optional<Vec3> recovered_impulse;
};

// Noise floor of an impulse measurement against a state whose effective
// momentum variance (state variance at readout mapped through the rotation,
// plus readout noise) is var_p_eff:
//   dp_min = sqrt(2 (var_p_eff + (m w dx)^2)),
// and its distance below the standard quantum limit sqrt(hbar m w) in dB.
// With a ground-state variance and no readout noise this returns exactly
// the SQL reference value.
void min_detectable_impulse(const Vec3& var_p_eff, double mass,
                            const Vec3& omega, const Vec3& shot_noise_x,
                            Vec3& dp_min, Vec3& db_below_sql);

enum class RunMode { deterministic, stochastic };

struct RunSpec {
  RunMode mode = RunMode::deterministic;
  std::uint64_t seed = 0;
  std::optional<ImpulseEvent> impulse;
  // Readout model: 0 means a noiseless final position measurement (the
  // documented noise-floor convention used for SQL comparisons); positive
  // values feed measurement_shot_noise with the stiff-trap recoil rate.
  double readout_time = 0.0;
  // Extra absolute times to sample into the trajectory record.
  std::vector<double> record_times;
  double stochastic_dt_divisor = 500.0;  // steps per shortest stiff period
  IntegratorOptions integrator;
};

struct ProtocolRunResult {
  TrajectoryRecord trajectory;
  SensingResult sensing;
  State3D state_at_toff;
  State3D state_at_end;
};

// Evolves the ground state of the stiff trap through the timeline and
// assembles the sensing figures. Deterministic mode runs the conditional
// covariance flow with the configured eta and noiseless means; stochastic
// mode samples one conditional trajectory. An impulse, when present, is a
// momentum kick at its event time; the recovered-impulse entry of the
// result is reconstructed against a matching no-impulse reference run.
ProtocolRunResult run_protocol(double mass, const SqueezeProtocol& proto,
                               const ProtocolTimeline& timeline,
                               const RunSpec& spec);

}  // namespace levsq

#include "levsq/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

namespace {

// ---------------------------------------------------------------------------
// Dimensionless cumulants. Per axis we integrate
//   u1 = V_xx m w_s / hbar, u2 = V_pp / (hbar m w_s), u3 = C_xp / hbar
// where w_s is the measurement reference frequency (x0^2 = hbar/(m w_s)).
// In these variables the conditional flow reads
//   u1' = 2 w_s u3            - 4 eta g u1^2
//   u2' = -2 (w^2/w_s) u3 + g - 4 eta g u3^2
//   u3' = w_s u2 - (w^2/w_s) u1 - 4 eta g u1 u3
// with g the instantaneous rate. The uncertainty determinant is
// u1 u2 - u3^2 = det/hbar^2, so the physicality bound becomes >= 1/4.
// ---------------------------------------------------------------------------

struct AxisFlow {
  double w_scale;   // w_s above, rad/s
  double w2_ratio;  // omega_seg^2 / w_s (0 when the trap is off)
  double gamma;     // instantaneous rate, 1/s
  double eta4;      // 4 * eta * gamma
};

inline void flow_rhs(const AxisFlow& f, const double u[3], double du[3]) {
  du[0] = 2.0 * f.w_scale * u[2] - f.eta4 * u[0] * u[0];
  du[1] = -2.0 * f.w2_ratio * u[2] + f.gamma - f.eta4 * u[2] * u[2];
  du[2] = f.w_scale * u[1] - f.w2_ratio * u[0] - f.eta4 * u[0] * u[2];
}

// Dormand-Prince 5(4) coefficients.
constexpr double dp_c2 = 1.0 / 5, dp_c3 = 3.0 / 10, dp_c4 = 4.0 / 5,
                 dp_c5 = 8.0 / 9;
constexpr double dp_a21 = 1.0 / 5;
constexpr double dp_a31 = 3.0 / 40, dp_a32 = 9.0 / 40;
constexpr double dp_a41 = 44.0 / 45, dp_a42 = -56.0 / 15, dp_a43 = 32.0 / 9;
constexpr double dp_a51 = 19372.0 / 6561, dp_a52 = -25360.0 / 2187,
                 dp_a53 = 64448.0 / 6561, dp_a54 = -212.0 / 729;
constexpr double dp_a61 = 9017.0 / 3168, dp_a62 = -355.0 / 33,
                 dp_a63 = 46732.0 / 5247, dp_a64 = 49.0 / 176,
                 dp_a65 = -5103.0 / 18656;
constexpr double dp_b1 = 35.0 / 384, dp_b3 = 500.0 / 1113, dp_b4 = 125.0 / 192,
                 dp_b5 = -2187.0 / 6784, dp_b6 = 11.0 / 84;
// Error weights: 5th order solution minus embedded 4th order one.
constexpr double dp_e1 = 71.0 / 57600, dp_e3 = -71.0 / 16695,
                 dp_e4 = 71.0 / 1920, dp_e5 = -17253.0 / 339200,
                 dp_e6 = 22.0 / 525, dp_e7 = -1.0 / 40;

using StepCallback =
    void (*)(double t_local, const double u[3], void* user_data);

// Integrates u over [0, duration] with adaptive steps; calls `cb` after each
// accepted step (physicality audit and observer live there).
void integrate_flow(const AxisFlow& f, double u[3], double duration,
                    const IntegratorOptions& opt, StepCallback cb,
                    void* user_data) {
  if (duration == 0.0) return;

  const double char_time =
      2 * pi / std::max({f.w_scale, std::sqrt(f.w2_ratio * f.w_scale), 1e-300});
  double h = std::min(duration, 0.05 * char_time);
  if (opt.dt_max > 0) h = std::min(h, opt.dt_max);

  double t = 0.0;
  double k1[3];
  flow_rhs(f, u, k1);  // FSAL: k1 carried across accepted steps

  long iterations = 0;
  while (t < duration) {
    if (++iterations > 50'000'000)
      throw numerical_error("covariance integrator: step budget exhausted");
    bool final_step = false;
    if (t + h >= duration) {
      h = duration - t;
      final_step = true;
    }

    double k2[3], k3[3], k4[3], k5[3], k6[3], k7[3], y[3], u5[3];
    for (int i = 0; i < 3; ++i) y[i] = u[i] + h * dp_a21 * k1[i];
    flow_rhs(f, y, k2);
    for (int i = 0; i < 3; ++i)
      y[i] = u[i] + h * (dp_a31 * k1[i] + dp_a32 * k2[i]);
    flow_rhs(f, y, k3);
    for (int i = 0; i < 3; ++i)
      y[i] = u[i] + h * (dp_a41 * k1[i] + dp_a42 * k2[i] + dp_a43 * k3[i]);
    flow_rhs(f, y, k4);
    for (int i = 0; i < 3; ++i)
      y[i] = u[i] + h * (dp_a51 * k1[i] + dp_a52 * k2[i] + dp_a53 * k3[i] +
                         dp_a54 * k4[i]);
    flow_rhs(f, y, k5);
    for (int i = 0; i < 3; ++i)
      y[i] = u[i] + h * (dp_a61 * k1[i] + dp_a62 * k2[i] + dp_a63 * k3[i] +
                         dp_a64 * k4[i] + dp_a65 * k5[i]);
    flow_rhs(f, y, k6);
    for (int i = 0; i < 3; ++i)
      u5[i] = u[i] + h * (dp_b1 * k1[i] + dp_b3 * k3[i] + dp_b4 * k4[i] +
                          dp_b5 * k5[i] + dp_b6 * k6[i]);
    flow_rhs(f, u5, k7);

    double err_norm = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double err =
          h * (dp_e1 * k1[i] + dp_e3 * k3[i] + dp_e4 * k4[i] + dp_e5 * k5[i] +
               dp_e6 * k6[i] + dp_e7 * k7[i]);
      const double scale =
          opt.abs_tol +
          opt.rel_tol * std::max(std::abs(u[i]), std::abs(u5[i]));
      const double r = err / scale;
      err_norm += r * r;
    }
    err_norm = std::sqrt(err_norm / 3.0);

    if (err_norm <= 1.0) {
      t += h;
      for (int i = 0; i < 3; ++i) {
        u[i] = u5[i];
        k1[i] = k7[i];
      }
      cb(t, u, user_data);
      if (final_step) break;
    }

    const double factor = (err_norm > 0)
                              ? 0.9 * std::pow(err_norm, -0.2)
                              : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (opt.dt_max > 0) h = std::min(h, opt.dt_max);
    if (h < duration * 1e-15)
      throw numerical_error("covariance integrator: step size underflow");
  }
}

struct AuditCtx {
  int axis;
  double hbar_mw;  // hbar * m * w_scale, converts u back to SI for dumps
  double mass;
  double w_scale;
  const IntegratorOptions* opt;
  const char* context;
  // Mean closed-form evaluation for observer callbacks.
  double mean_x0, mean_p0, omega_mean, x_center;
  bool trap_on;
  double grav_accel;  // 0 unless gravity acts on this axis
};

AxisGaussianState axis_state_from_u(const AuditCtx& c, double t,
                                    const double u[3]) {
  AxisGaussianState s;
  const double hbar = constants.hbar;
  s.var_x = u[0] * hbar / (c.mass * c.w_scale);
  s.var_p = u[1] * c.hbar_mw;
  s.cov_xp = u[2] * hbar;
  if (c.trap_on) {
    const double wt = c.omega_mean * t;
    const double cwt = std::cos(wt), swt = std::sin(wt);
    const double dx = c.mean_x0 - c.x_center;
    s.mean_x = c.x_center + dx * cwt + c.mean_p0 / (c.mass * c.omega_mean) * swt;
    s.mean_p = c.mean_p0 * cwt - c.mass * c.omega_mean * dx * swt;
  } else {
    s.mean_x = c.mean_x0 + c.mean_p0 * t / c.mass - 0.5 * c.grav_accel * t * t;
    s.mean_p = c.mean_p0 - c.mass * c.grav_accel * t;
  }
  return s;
}

void audit_step(double t_local, const double u[3], void* user_data) {
  const auto& c = *static_cast<const AuditCtx*>(user_data);
  const double det_u = u[0] * u[1] - u[2] * u[2];
  if (!(det_u >= 0.25 * (1.0 - physicality_tol)) || !std::isfinite(det_u)) {
    AxisGaussianState s = axis_state_from_u(c, t_local, u);
    std::ostringstream os;
    os.precision(17);
    os << c.context << ": physicality violated during integration, axis "
       << c.axis << " at segment-local t=" << t_local << " s: V_xx=" << s.var_x
       << " V_pp=" << s.var_p << " C_xp=" << s.cov_xp
       << " det/hbar^2=" << det_u << " bound=0.25";
    throw physicality_error(os.str());
  }
  if (c.opt->step_observer)
    c.opt->step_observer(t_local, c.axis, axis_state_from_u(c, t_local, u));
}

AxisFlow make_flow(const ScheduleSegment& seg, int axis) {
  const double w_ref = seg.resolved_omega_ref(axis);
  AxisFlow f;
  if (w_ref > 0) {
    f.w_scale = w_ref;
  } else {
    // No measurement coupling anywhere on this axis; the scale is then a
    // pure change of variables and any positive value is exact.
    f.w_scale = 1.0;
  }
  const double w = seg.trap_on ? seg.omega[axis] : 0.0;
  f.w2_ratio = w * w / f.w_scale;
  f.gamma = seg.gamma[axis];
  f.eta4 = 4.0 * seg.eta[axis] * seg.gamma[axis];
  return f;
}

void means_end_of_segment(const ScheduleSegment& seg, double mass, int axis,
                          double duration, double& mean_x, double& mean_p) {
  const double g_acc = (seg.gravity_on && axis == seg.vertical_axis)
                           ? constants.g_grav
                           : 0.0;
  if (seg.trap_on) {
    const double w = seg.omega[axis];
    const double x_c = -g_acc / (w * w);
    const double cwt = std::cos(w * duration), swt = std::sin(w * duration);
    const double dx = mean_x - x_c;
    const double p0 = mean_p;
    mean_x = x_c + dx * cwt + p0 / (mass * w) * swt;
    mean_p = p0 * cwt - mass * w * dx * swt;
  } else {
    mean_x += mean_p * duration / mass - 0.5 * g_acc * duration * duration;
    mean_p -= mass * g_acc * duration;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule types
// ---------------------------------------------------------------------------

double ScheduleSegment::resolved_omega_ref(int axis) const {
  if (omega_ref[axis] > 0) return omega_ref[axis];
  if (trap_on && omega[axis] > 0) return omega[axis];
  return 0.0;
}

void ScheduleSegment::validate() const {
  auto fail = [](const std::string& m) {
    throw invalid_parameter_error("schedule segment: " + m);
  };
  if (!(duration >= 0) || !std::isfinite(duration))
    fail("duration must be finite and non-negative");
  if (vertical_axis < 0 || vertical_axis > 2)
    fail("vertical_axis must be 0, 1 or 2");
  for (int i = 0; i < 3; ++i) {
    if (!(eta[i] >= 0 && eta[i] <= 1)) fail("eta must lie in [0, 1]");
    if (!(gamma[i] >= 0)) fail("gamma must be non-negative");
    if (omega_ref[i] < 0) fail("omega_ref must be non-negative");
    if (trap_on && !(omega[i] > 0))
      fail("trap-on segments need positive frequencies on all axes");
    if (!trap_on && eta[i] != 0)
      fail("eta must be 0 when the trap is off (no measurement record)");
    if (gamma[i] > 0 && resolved_omega_ref(i) <= 0)
      fail("a positive gamma needs a zero-point reference frequency "
           "(omega_ref, or a trap-on segment frequency)");
  }
}

double Schedule::total_duration() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration;
  return t;
}

void Schedule::validate() const {
  if (segments.empty())
    throw invalid_parameter_error("schedule: needs at least one segment");
  for (const auto& s : segments) s.validate();
  if (!std::isfinite(total_duration()))
    throw invalid_parameter_error("schedule: total duration must be finite");
}

// ---------------------------------------------------------------------------
// Deterministic covariance integration
// ---------------------------------------------------------------------------

State3D integrate_covariances(const State3D& state, const ScheduleSegment& seg,
                              double mass, const IntegratorOptions& opt) {
  seg.validate();
  if (!(mass > 0))
    throw invalid_parameter_error("integrate_covariances: mass must be positive");
  check_physical(state, "integrate_covariances (input)");

  State3D out = state;
  const double hbar = constants.hbar;
  for (int axis = 0; axis < 3; ++axis) {
    const AxisFlow f = make_flow(seg, axis);
    auto& ax = out.axes[axis];

    AuditCtx ctx;
    ctx.axis = axis;
    ctx.hbar_mw = hbar * mass * f.w_scale;
    ctx.mass = mass;
    ctx.w_scale = f.w_scale;
    ctx.opt = &opt;
    ctx.context = "integrate_covariances";
    ctx.mean_x0 = ax.mean_x;
    ctx.mean_p0 = ax.mean_p;
    ctx.trap_on = seg.trap_on;
    ctx.omega_mean = seg.trap_on ? seg.omega[axis] : 0.0;
    ctx.grav_accel = (seg.gravity_on && axis == seg.vertical_axis)
                         ? constants.g_grav
                         : 0.0;
    ctx.x_center =
        seg.trap_on ? -ctx.grav_accel / (ctx.omega_mean * ctx.omega_mean) : 0.0;

    double u[3] = {ax.var_x * mass * f.w_scale / hbar,
                   ax.var_p / (hbar * mass * f.w_scale), ax.cov_xp / hbar};
    integrate_flow(f, u, seg.duration, opt, &audit_step, &ctx);
    ax.var_x = u[0] * hbar / (mass * f.w_scale);
    ax.var_p = u[1] * hbar * mass * f.w_scale;
    ax.cov_xp = u[2] * hbar;
    means_end_of_segment(seg, mass, axis, seg.duration, ax.mean_x, ax.mean_p);
  }
  check_physical(out, "integrate_covariances (output)");
  return out;
}

// ---------------------------------------------------------------------------
// Analytic odd-quarter propagator
// ---------------------------------------------------------------------------

AxisGaussianState propagate_quarter_analytic(const AxisGaussianState& in,
                                             double mass, double omega_ref,
                                             double omega_seg,
                                             double gamma_ref,
                                             int n_quarters) {
  if (!(mass > 0) || !(omega_ref > 0) || !(omega_seg > 0))
    throw invalid_parameter_error(
        "propagate_quarter_analytic: mass and frequencies must be positive");
  if (gamma_ref < 0)
    throw invalid_parameter_error(
        "propagate_quarter_analytic: gamma must be non-negative");
  if (n_quarters < 1 || n_quarters % 2 == 0)
    throw invalid_parameter_error(
        "propagate_quarter_analytic: n_quarters must be a positive odd count");
  check_physical(in, "propagate_quarter_analytic (input)");

  const double w = omega_seg;
  const double mw = mass * w;
  const double mw2 = mw * mw;
  // Momentum diffusion source S = hbar^2 gamma_seg / x0_ref^2 with the
  // segment rate gamma_seg = gamma_ref * w/omega_ref and x0_ref^2 =
  // hbar/(m omega_ref); the reference frequency cancels.
  const double S = constants.hbar * mass * gamma_ref * w;
  const double quarter_diff = n_quarters * pi * S / (4.0 * w);

  AxisGaussianState out;
  out.var_x = in.var_p / mw2 + quarter_diff / mw2;
  out.var_p = mw2 * in.var_x + quarter_diff;
  out.cov_xp = -in.cov_xp + S / (2.0 * mass * w * w);
  const double sign = (n_quarters % 4 == 1) ? 1.0 : -1.0;
  out.mean_x = sign * in.mean_p / mw;
  out.mean_p = -sign * mw * in.mean_x;
  check_physical(out, "propagate_quarter_analytic (output)");
  return out;
}

State3D propagate_quarter_analytic(const State3D& state,
                                   const ScheduleSegment& seg, double mass) {
  seg.validate();
  if (!seg.trap_on)
    throw invalid_parameter_error(
        "propagate_quarter_analytic: segment must be trap-on");
  for (int i = 0; i < 3; ++i) {
    if (seg.eta[i] != 0)
      throw invalid_parameter_error(
          "propagate_quarter_analytic: analytic solution requires eta = 0 "
          "(unconditioned evolution)");
  }
  State3D out = state;
  for (int axis = 0; axis < 3; ++axis) {
    const double w = seg.omega[axis];
    const double quarters_exact = seg.duration * 2.0 * w / pi;
    const int n_q = static_cast<int>(std::lround(quarters_exact));
    if (n_q < 1 || n_q % 2 == 0 ||
        std::abs(quarters_exact - n_q) > 1e-9 * std::max(1.0, quarters_exact)) {
      std::ostringstream os;
      os << "propagate_quarter_analytic: segment duration " << seg.duration
         << " s is not an odd number of quarter periods on axis " << axis
         << " (got " << quarters_exact << " quarters)";
      throw invalid_parameter_error(os.str());
    }
    const double w_ref = seg.resolved_omega_ref(axis);
    const double gamma_ref = seg.gamma[axis] * w_ref / w;
    out.axes[axis] = propagate_quarter_analytic(state.axes[axis], mass, w_ref,
                                                w, gamma_ref, n_q);
    if (seg.gravity_on && axis == seg.vertical_axis) {
      // Redo the means with the gravity offset folded in; the homogeneous
      // rotation applied above is only exact about the displaced center.
      auto& ax = out.axes[axis];
      ax.mean_x = state.axes[axis].mean_x;
      ax.mean_p = state.axes[axis].mean_p;
      means_end_of_segment(seg, mass, axis, seg.duration, ax.mean_x, ax.mean_p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Free expansion
// ---------------------------------------------------------------------------

State3D free_expansion(const State3D& state, double dt, double d_bb,
                       double mass, bool gravity_on, int vertical_axis) {
  if (!(dt >= 0))
    throw invalid_parameter_error("free_expansion: dt must be non-negative");
  if (d_bb < 0)
    throw invalid_parameter_error("free_expansion: diffusion must be >= 0");
  if (!(mass > 0))
    throw invalid_parameter_error("free_expansion: mass must be positive");
  check_physical(state, "free_expansion (input)");

  State3D out = state;
  for (int axis = 0; axis < 3; ++axis) {
    auto& ax = out.axes[axis];
    const double vx = ax.var_x, vp = ax.var_p, c = ax.cov_xp;
    ax.var_x = vx + 2.0 * dt * c / mass + dt * dt * vp / (mass * mass) +
               d_bb * dt * dt * dt / (3.0 * mass * mass);
    ax.cov_xp = c + dt * vp / mass + d_bb * dt * dt / (2.0 * mass);
    ax.var_p = vp + d_bb * dt;
    const double g_acc =
        (gravity_on && axis == vertical_axis) ? constants.g_grav : 0.0;
    ax.mean_x += ax.mean_p * dt / mass - 0.5 * g_acc * dt * dt;
    ax.mean_p -= mass * g_acc * dt;
  }
  check_physical(out, "free_expansion (output)");
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic trajectories
// ---------------------------------------------------------------------------

namespace {

struct NullAudit {
  static void cb(double, const double[3], void*) {}
};

// Covariance state advanced without the mean bookkeeping of the public
// entry point; used stepwise inside the trajectory sampler.
void advance_covariances(AxisGaussianState& ax, const AxisFlow& f, double mass,
                         double duration, const IntegratorOptions& opt,
                         const char* context) {
  const double hbar = constants.hbar;
  double u[3] = {ax.var_x * mass * f.w_scale / hbar,
                 ax.var_p / (hbar * mass * f.w_scale), ax.cov_xp / hbar};
  struct Ctx {
    const char* context;
  } ctx{context};
  auto audit = [](double t, const double u[3], void* user) {
    const double det_u = u[0] * u[1] - u[2] * u[2];
    if (!(det_u >= 0.25 * (1.0 - physicality_tol))) {
      std::ostringstream os;
      os.precision(17);
      os << static_cast<Ctx*>(user)->context
         << ": physicality violated at step-local t=" << t
         << " s, det/hbar^2=" << det_u;
      throw physicality_error(os.str());
    }
  };
  integrate_flow(f, u, duration, opt, audit, &ctx);
  ax.var_x = u[0] * hbar / (mass * f.w_scale);
  ax.var_p = u[1] * hbar * mass * f.w_scale;
  ax.cov_xp = u[2] * hbar;
}

}  // namespace

TrajectoryRecord stochastic_trajectory(const State3D& state,
                                       const Schedule& schedule, double mass,
                                       double dt, std::uint64_t seed,
                                       const StochasticOptions& opt) {
  schedule.validate();
  if (!(mass > 0))
    throw invalid_parameter_error("stochastic_trajectory: mass must be positive");
  if (!(dt > 0))
    throw invalid_parameter_error("stochastic_trajectory: dt must be positive");
  check_physical(state, "stochastic_trajectory (input)");

  // Contract: at least 200 steps per trap-on period on every axis.
  for (const auto& seg : schedule.segments) {
    if (!seg.trap_on || seg.duration == 0) continue;
    for (int i = 0; i < 3; ++i) {
      const double period = 2 * pi / seg.omega[i];
      if (dt > period / 200.0 * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "stochastic_trajectory: dt=" << dt
           << " s exceeds period/200 = " << period / 200.0
           << " s for a trap-on segment (axis " << i << ")";
        throw invalid_parameter_error(os.str());
      }
    }
  }

  const double hbar = constants.hbar;
  const double total = schedule.total_duration();
  if (opt.impulse_time &&
      (*opt.impulse_time < 0 || *opt.impulse_time > total * (1 + 1e-12)))
    throw invalid_parameter_error(
        "stochastic_trajectory: impulse time outside the schedule span");

  TrajectoryRecord rec;
  rec.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  State3D cur = state;
  double t_global = 0.0;
  bool impulse_pending = opt.impulse_time.has_value();
  if (impulse_pending && *opt.impulse_time <= 1e-12 * total) {
    for (int i = 0; i < 3; ++i) cur.axes[i].mean_p += opt.impulse_dp[i];
    impulse_pending = false;
  }
  auto record_state = [&](double t) {
    if (!rec.times.empty() &&
        std::abs(rec.times.back() - t) <= 1e-12 * std::max(1e-30, total))
      return;
    rec.times.push_back(t);
    rec.states.push_back(cur);
  };
  record_state(0.0);

  // Sorted interior stop times (records, impulse) per segment are handled by
  // splitting the uniform Euler-Maruyama grid so each lands on a step edge.
  std::vector<double> stops = opt.record_times;
  if (impulse_pending) stops.push_back(*opt.impulse_time);
  std::sort(stops.begin(), stops.end());

  for (const auto& seg : schedule.segments) {
    const double t_seg_start = t_global;
    const double t_seg_end = t_seg_start + seg.duration;
    if (seg.duration == 0) {
      t_global = t_seg_end;
      continue;
    }

    AxisFlow flows[3];
    double gains_coef[3];  // 2 sqrt(eta gamma) / x0_ref
    double cw[3], sw[3];   // per-step rotation, filled per sub-interval
    for (int i = 0; i < 3; ++i) {
      flows[i] = make_flow(seg, i);
      const double eg = seg.eta[i] * seg.gamma[i];
      gains_coef[i] =
          (eg > 0) ? 2.0 * std::sqrt(eg * mass * flows[i].w_scale / hbar) : 0.0;
    }

    // Break the segment at interior stops.
    std::vector<double> edges;
    edges.push_back(t_seg_start);
    for (double s : stops) {
      if (s > t_seg_start + 1e-15 * total && s < t_seg_end - 1e-15 * total)
        edges.push_back(s);
    }
    edges.push_back(t_seg_end);
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      const double span = edges[e + 1] - edges[e];
      const long n_steps = std::max(1L, static_cast<long>(std::ceil(span / dt)));
      const double h = span / static_cast<double>(n_steps);
      const double sqrt_h = std::sqrt(h);
      for (int i = 0; i < 3; ++i) {
        const double w = seg.trap_on ? seg.omega[i] : 0.0;
        cw[i] = std::cos(w * h);
        sw[i] = std::sin(w * h);
      }

      for (long step = 0; step < n_steps; ++step) {
        for (int i = 0; i < 3; ++i) {
          auto& ax = cur.axes[i];
          // Midpoint covariance for the innovation gain.
          AxisGaussianState mid = ax;
          advance_covariances(mid, flows[i], mass, 0.5 * h,
                              opt.covariance_options, "stochastic_trajectory");
          const double gx = gains_coef[i] * mid.var_x;
          const double gp = gains_coef[i] * mid.cov_xp;
          // Finish the covariance step from the midpoint.
          AxisGaussianState endv = mid;
          advance_covariances(endv, flows[i], mass, 0.5 * h,
                              opt.covariance_options, "stochastic_trajectory");
          ax.var_x = endv.var_x;
          ax.var_p = endv.var_p;
          ax.cov_xp = endv.cov_xp;

          // Deterministic mean flow over h (exact for the linear part).
          const double g_acc =
              (seg.gravity_on && i == seg.vertical_axis) ? constants.g_grav
                                                         : 0.0;
          if (seg.trap_on) {
            const double w = seg.omega[i];
            const double x_c = -g_acc / (w * w);
            const double dx = ax.mean_x - x_c;
            const double p0 = ax.mean_p;
            ax.mean_x = x_c + dx * cw[i] + p0 / (mass * w) * sw[i];
            ax.mean_p = p0 * cw[i] - mass * w * dx * sw[i];
          } else {
            ax.mean_x += ax.mean_p * h / mass - 0.5 * g_acc * h * h;
            ax.mean_p -= mass * g_acc * h;
          }

          // Innovation kick.
          if (gains_coef[i] > 0) {
            const double xi = normal(rng);
            ax.mean_x += gx * xi * sqrt_h;
            ax.mean_p += gp * xi * sqrt_h;
            if (opt.record_innovations) rec.measurement_record[i].push_back(xi);
          } else if (opt.record_innovations) {
            rec.measurement_record[i].push_back(0.0);
          }
        }
      }

      t_global = edges[e + 1];
      // Apply the impulse exactly at its event time.
      if (impulse_pending &&
          std::abs(t_global - *opt.impulse_time) <= 1e-12 * std::max(1e-30, total)) {
        for (int i = 0; i < 3; ++i) cur.axes[i].mean_p += opt.impulse_dp[i];
        impulse_pending = false;
      }
      // Record interior stop times that asked for it.
      for (double s : opt.record_times) {
        if (std::abs(s - t_global) <= 1e-12 * std::max(1e-30, total)) {
          record_state(t_global);
          break;
        }
      }
    }
    record_state(t_seg_end);
  }

  return rec;
}

}  // namespace levsq

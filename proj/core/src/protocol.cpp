#include "levsq/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

namespace {

double quarter_duration(double omega, int k) {
  return (2 * k + 1) * pi / (2.0 * omega);
}

}  // namespace

HarmonicAssignment check_harmonic_condition(const Vec3& omega, int max_k,
                                            double residual_tol) {
  for (double w : omega) {
    if (!(w > 0) || !std::isfinite(w)) {
      throw invalid_parameter_error(
          "check_harmonic_condition: frequencies must be positive");
    }
  }
  if (max_k < 0) {
    throw invalid_parameter_error("check_harmonic_condition: max_k < 0");
  }

  HarmonicAssignment best;
  best.residual = std::numeric_limits<double>::infinity();
  int best_sum = std::numeric_limits<int>::max();

  for (int kx = 0; kx <= max_k; ++kx) {
    for (int ky = 0; ky <= max_k; ++ky) {
      for (int kz = 0; kz <= max_k; ++kz) {
        const double rx = omega[0] / (2 * kx + 1);
        const double ry = omega[1] / (2 * ky + 1);
        const double rz = omega[2] / (2 * kz + 1);
        const double lo = std::min({rx, ry, rz});
        const double hi = std::max({rx, ry, rz});
        const double mean = (rx + ry + rz) / 3.0;
        const double res = (hi - lo) / mean;
        const int sum = kx + ky + kz;
        if (res < best.residual - 1e-15 * best.residual ||
            (res <= best.residual * (1 + 1e-12) && sum < best_sum)) {
          best.residual = res;
          best.k = {kx, ky, kz};
          best_sum = sum;
        }
      }
    }
  }
  best.satisfiable = best.residual <= residual_tol;
  return best;
}

double SqueezeProtocol::soft_duration() const {
  double sum = 0;
  for (int i = 0; i < 3; ++i) sum += quarter_duration(omega_soft[i], k_soft[i]);
  return sum / 3.0;
}

double SqueezeProtocol::stiff_duration() const {
  double sum = 0;
  for (int i = 0; i < 3; ++i) {
    sum += quarter_duration(omega_stiff[i], k_stiff[i]);
  }
  return sum / 3.0;
}

void SqueezeProtocol::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(omega_stiff[i] > 0) || !(omega_soft[i] > 0)) {
      throw invalid_parameter_error(
          "SqueezeProtocol: trap frequencies must be positive");
    }
    if (omega_soft[i] >= omega_stiff[i]) {
      throw invalid_parameter_error(
          "SqueezeProtocol: the soft trap must be softer than the stiff one");
    }
    if (eta[i] < 0 || eta[i] > 1) {
      throw invalid_parameter_error(
          "SqueezeProtocol: detection efficiency outside [0, 1]");
    }
    if (gamma_stiff[i] < 0) {
      throw invalid_parameter_error(
          "SqueezeProtocol: negative decoherence rate");
    }
    if (k_soft[i] < 0 || k_stiff[i] < 0) {
      throw invalid_parameter_error("SqueezeProtocol: negative pulse index");
    }
  }
  if (n_cycles < 0) {
    throw invalid_parameter_error("SqueezeProtocol: n_cycles < 0");
  }
  // The common durations must actually be common: every axis has to land on
  // its odd quarter at the shared segment end, or the analytic pulse map
  // does not apply.
  const double t1 = soft_duration();
  const double t2 = stiff_duration();
  for (int i = 0; i < 3; ++i) {
    const double d1 = quarter_duration(omega_soft[i], k_soft[i]);
    const double d2 = quarter_duration(omega_stiff[i], k_stiff[i]);
    if (std::abs(d1 - t1) > 1e-9 * t1 || std::abs(d2 - t2) > 1e-9 * t2) {
      std::ostringstream msg;
      msg << "SqueezeProtocol: axis " << i
          << " misses the common pulse duration (relative gap "
          << std::abs(d1 - t1) / t1 << " soft, " << std::abs(d2 - t2) / t2
          << " stiff)";
      throw invalid_parameter_error(msg.str());
    }
  }
}

SqueezeProtocol make_protocol(const Vec3& omega_stiff, double freq_ratio,
                              int n_cycles, const Vec3& eta,
                              const Vec3& gamma_stiff, int max_k,
                              double residual_tol) {
  if (!(freq_ratio > 0) || freq_ratio >= 1) {
    throw invalid_parameter_error("make_protocol: freq_ratio must be in (0,1)");
  }
  SqueezeProtocol proto;
  proto.omega_stiff = omega_stiff;
  for (int i = 0; i < 3; ++i) proto.omega_soft[i] = freq_ratio * omega_stiff[i];
  proto.n_cycles = n_cycles;
  proto.eta = eta;
  proto.gamma_stiff = gamma_stiff;

  const HarmonicAssignment soft =
      check_harmonic_condition(proto.omega_soft, max_k, residual_tol);
  if (!soft.satisfiable) {
    std::ostringstream msg;
    msg << "make_protocol: no commensurate soft pulse up to max_k=" << max_k
        << " (best residual " << soft.residual << ")";
    throw invalid_parameter_error(msg.str());
  }
  const HarmonicAssignment stiff =
      check_harmonic_condition(proto.omega_stiff, max_k, residual_tol);
  if (!stiff.satisfiable) {
    std::ostringstream msg;
    msg << "make_protocol: no commensurate stiff pulse up to max_k=" << max_k
        << " (best residual " << stiff.residual << ")";
    throw invalid_parameter_error(msg.str());
  }
  proto.k_soft = soft.k;
  proto.k_stiff = stiff.k;
  proto.validate();
  return proto;
}

ProtocolTimeline build_bangbang_schedule(const SqueezeProtocol& proto,
                                         double free_fall, bool gravity_on,
                                         const Vec3& gamma_bb,
                                         int vertical_axis) {
  proto.validate();
  if (free_fall < 0 || !std::isfinite(free_fall)) {
    throw invalid_parameter_error(
        "build_bangbang_schedule: bad free-fall duration");
  }
  for (double g : gamma_bb) {
    if (g < 0 || !std::isfinite(g)) {
      throw invalid_parameter_error(
          "build_bangbang_schedule: negative trap-off localization rate");
    }
  }

  const double t1 = proto.soft_duration();
  const double t2 = proto.stiff_duration();

  ScheduleSegment stiff;
  stiff.trap_on = true;
  stiff.omega = proto.omega_stiff;
  stiff.omega_ref = proto.omega_stiff;
  stiff.eta = proto.eta;
  stiff.gamma = proto.gamma_stiff;
  stiff.gravity_on = gravity_on;
  stiff.vertical_axis = vertical_axis;
  stiff.duration = t2;

  ScheduleSegment soft = stiff;
  soft.omega = proto.omega_soft;
  soft.duration = t1;
  // The measurement coupling tracks the optical intensity, which also sets
  // the trap stiffness: at fixed zero-point reference the instantaneous
  // rate in the soft trap is gamma_stiff * omega_soft/omega_stiff.
  for (int i = 0; i < 3; ++i) {
    soft.gamma[i] =
        proto.gamma_stiff[i] * proto.omega_soft[i] / proto.omega_stiff[i];
  }

  ProtocolTimeline tl;
  // Zero-duration lead-in pins the initial condition to the stiff trap in
  // the record without evolving anything.
  ScheduleSegment lead = stiff;
  lead.duration = 0;
  tl.schedule.segments.push_back(lead);
  for (int n = 0; n < proto.n_cycles; ++n) {
    tl.schedule.segments.push_back(soft);
    if (n + 1 < proto.n_cycles) tl.schedule.segments.push_back(stiff);
  }
  tl.t_off = tl.schedule.total_duration();

  if (free_fall > 0) {
    ScheduleSegment off;
    off.trap_on = false;
    off.duration = free_fall;
    off.omega = {0, 0, 0};
    off.omega_ref = proto.omega_stiff;
    off.eta = {0, 0, 0};
    off.gamma = gamma_bb;
    off.gravity_on = gravity_on;
    off.vertical_axis = vertical_axis;
    tl.schedule.segments.push_back(off);
  }
  tl.free_fall_duration = free_fall;
  tl.t_on = tl.t_off + free_fall;

  // Readout rotation: every axis must advance an odd number of quarter
  // periods in the same interval so the squeezed momentum quadrature lands
  // on position simultaneously. Reuse the stiff-trap assignment.
  ScheduleSegment readout = stiff;
  readout.duration = t2;
  tl.schedule.segments.push_back(readout);
  tl.t_end = tl.t_on + t2;
  return tl;
}

double asymptotic_variance(double mass, double omega, double omega_soft,
                           double gamma) {
  if (!(omega > 0) || !(omega_soft > 0) || omega_soft >= omega) {
    throw invalid_parameter_error(
        "asymptotic_variance: need 0 < omega_soft < omega");
  }
  const double hw = constants.hbar * mass * omega / 2.0;
  const double ratio =
      (omega * omega + omega_soft * omega_soft) /
      (omega * omega - omega_soft * omega_soft);
  return hw * (pi / 2.0) * (gamma / omega) * ratio;
}

double finite_cycle_variance(double mass, double omega, double omega_soft,
                             double gamma, double n_t, int n_p) {
  if (!(omega > 0) || !(omega_soft > 0) || omega_soft >= omega) {
    throw invalid_parameter_error(
        "finite_cycle_variance: need 0 < omega_soft < omega");
  }
  if (n_p < 1) {
    throw invalid_parameter_error("finite_cycle_variance: n_p < 1");
  }
  if (n_t < 0) {
    throw invalid_parameter_error("finite_cycle_variance: negative occupation");
  }
  const double hw = constants.hbar * mass * omega / 2.0;
  const double a = (omega_soft / omega) * (omega_soft / omega);
  const double an = std::pow(a, n_p);
  const double geometric = (1.0 - an) / (1.0 - a);
  return hw * (an * (1.0 + 2.0 * n_t) +
               (pi / 2.0) * (gamma / omega) * (-1.0 + 2.0 * geometric));
}

double measurement_shot_noise(double x0, double eta, double gamma_pulse,
                              double t_meas) {
  if (!(x0 > 0) || !(eta > 0) || !(gamma_pulse > 0) || !(t_meas > 0)) {
    throw invalid_parameter_error(
        "measurement_shot_noise: all arguments must be positive");
  }
  return x0 / std::sqrt(eta * gamma_pulse * t_meas);
}

void min_detectable_impulse(const Vec3& var_p_eff, double mass,
                            const Vec3& omega, const Vec3& shot_noise_x,
                            Vec3& dp_min, Vec3& db_below_sql) {
  for (int i = 0; i < 3; ++i) {
    if (var_p_eff[i] < 0 || shot_noise_x[i] < 0 || !(omega[i] > 0)) {
      throw invalid_parameter_error("min_detectable_impulse: bad inputs");
    }
    const double readout_p = mass * omega[i] * shot_noise_x[i];
    const double total = var_p_eff[i] + readout_p * readout_p;
    dp_min[i] = std::sqrt(2.0 * total);
    const double sql2 = constants.hbar * mass * omega[i];
    db_below_sql[i] = 10.0 * std::log10(sql2 / (2.0 * total));
  }
}

namespace {

// Index of the schedule segment whose interior contains time t (boundaries
// resolve to the later segment except at the very end).
State3D evolve_deterministic(const State3D& start, const Schedule& schedule,
                             double mass, const RunSpec& spec,
                             const std::optional<ImpulseEvent>& impulse,
                             TrajectoryRecord* rec) {
  State3D cur = start;
  double t = 0;
  const double total = schedule.total_duration();
  double t_kick = -1;
  Vec3 dp_kick = {0, 0, 0};
  if (impulse) {
    t_kick = impulse->time;
    double norm = 0;
    for (double d : impulse->direction) norm += d * d;
    norm = std::sqrt(norm);
    if (!(norm > 0)) {
      throw invalid_parameter_error(
          "run_protocol: impulse direction must be nonzero");
    }
    for (int i = 0; i < 3; ++i) {
      dp_kick[i] = impulse->magnitude * impulse->direction[i] / norm;
    }
    if (t_kick < 0 || t_kick > total * (1 + 1e-12)) {
      throw invalid_parameter_error(
          "run_protocol: impulse time outside the timeline");
    }
  }

  auto record = [&](double when, const State3D& s) {
    if (!rec) return;
    if (!rec->times.empty() &&
        std::abs(rec->times.back() - when) <= 1e-12 * std::max(total, 1.0)) {
      rec->states.back() = s;
      return;
    }
    rec->times.push_back(when);
    rec->states.push_back(s);
  };

  std::vector<double> extra = spec.record_times;
  std::sort(extra.begin(), extra.end());

  record(0.0, cur);
  if (impulse && t_kick <= 1e-12 * total) {
    for (int i = 0; i < 3; ++i) cur.axes[i].mean_p += dp_kick[i];
    t_kick = -1;
    record(0.0, cur);
  }

  for (const ScheduleSegment& seg : schedule.segments) {
    const double t_end = t + seg.duration;
    // Split the segment at interior stops: requested sample times and the
    // impulse event.
    std::vector<double> stops;
    for (double rt : extra) {
      if (rt > t + 1e-15 * total && rt < t_end - 1e-15 * total) {
        stops.push_back(rt);
      }
    }
    if (impulse && t_kick > t + 1e-15 * total &&
        t_kick <= t_end + 1e-12 * total) {
      stops.push_back(std::min(t_kick, t_end));
    }
    stops.push_back(t_end);
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end(),
                            [&](double a, double b) {
                              return std::abs(a - b) <=
                                     1e-12 * std::max(total, 1.0);
                            }),
                stops.end());

    double t_local = t;
    for (double stop : stops) {
      ScheduleSegment piece = seg;
      piece.duration = stop - t_local;
      if (piece.duration > 0) {
        cur = integrate_covariances(cur, piece, mass, spec.integrator);
      }
      t_local = stop;
      if (impulse && t_kick >= 0 &&
          std::abs(stop - t_kick) <= 1e-12 * std::max(total, 1.0)) {
        for (int i = 0; i < 3; ++i) cur.axes[i].mean_p += dp_kick[i];
        t_kick = -1;
      }
      record(t_local, cur);
    }
    t = t_end;
  }
  return cur;
}

State3D state_at_time(const TrajectoryRecord& rec, double when, double total) {
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    if (std::abs(rec.times[i] - when) <= 1e-9 * std::max(total, 1.0)) {
      return rec.states[i];
    }
  }
  throw numerical_error("run_protocol: requested time missing from record");
}

}  // namespace

ProtocolRunResult run_protocol(double mass, const SqueezeProtocol& proto,
                               const ProtocolTimeline& timeline,
                               const RunSpec& spec) {
  proto.validate();
  timeline.schedule.validate();
  if (!(mass > 0)) {
    throw invalid_parameter_error("run_protocol: mass must be positive");
  }

  State3D start = ground_state(mass, proto.omega_stiff);

  RunSpec effective = spec;
  effective.record_times.push_back(timeline.t_off);
  effective.record_times.push_back(timeline.t_on);
  effective.record_times.push_back(timeline.t_end);

  ProtocolRunResult out;
  const double total = timeline.schedule.total_duration();

  std::optional<ImpulseEvent> impulse = spec.impulse;
  if (impulse && !(impulse->magnitude >= 0)) {
    throw invalid_parameter_error("run_protocol: negative impulse magnitude");
  }

  if (spec.mode == RunMode::deterministic) {
    out.trajectory.rng_seed = spec.seed;
    State3D end = evolve_deterministic(start, timeline.schedule, mass,
                                       effective, impulse, &out.trajectory);
    out.state_at_end = end;
    out.state_at_toff = state_at_time(out.trajectory, timeline.t_off, total);
  } else {
    double w_max = 0;
    for (double w : proto.omega_stiff) w_max = std::max(w_max, w);
    const double dt = (2 * pi / w_max) / spec.stochastic_dt_divisor;
    StochasticOptions sopt;
    sopt.record_times = effective.record_times;
    sopt.covariance_options = spec.integrator;
    if (impulse) {
      sopt.impulse_time = impulse->time;
      double norm = 0;
      for (double d : impulse->direction) norm += d * d;
      norm = std::sqrt(norm);
      if (!(norm > 0)) {
        throw invalid_parameter_error(
            "run_protocol: impulse direction must be nonzero");
      }
      for (int i = 0; i < 3; ++i) {
        sopt.impulse_dp[i] = impulse->magnitude * impulse->direction[i] / norm;
      }
    }
    out.trajectory = stochastic_trajectory(start, timeline.schedule, mass, dt,
                                           spec.seed, sopt);
    out.state_at_end = out.trajectory.states.back();
    out.state_at_toff = state_at_time(out.trajectory, timeline.t_off, total);
  }

  // Sensing summary. The squeezing figure of merit is quoted at trap
  // switch-off; the impulse noise floor uses the position variance at the
  // readout instant mapped back through the stiff-trap rotation.
  out.sensing.metrics_at_toff =
      squeeze_metrics(out.state_at_toff, mass, proto.omega_stiff);

  Vec3 var_p_eff;
  for (int i = 0; i < 3; ++i) {
    const double mw = mass * proto.omega_stiff[i];
    var_p_eff[i] = mw * mw * out.state_at_end.axes[i].var_x;
  }

  Vec3 shot = {0, 0, 0};
  if (spec.readout_time > 0) {
    for (int i = 0; i < 3; ++i) {
      const double x0 = std::sqrt(constants.hbar / (mass * proto.omega_stiff[i]));
      shot[i] = measurement_shot_noise(x0, proto.eta[i], proto.gamma_stiff[i],
                                       spec.readout_time);
    }
  }
  out.sensing.shot_noise = shot;
  min_detectable_impulse(var_p_eff, mass, proto.omega_stiff, shot,
                         out.sensing.min_detectable_impulse,
                         out.sensing.db_below_sql);

  const double t_cool = 2.0 * (timeline.t_off + proto.stiff_duration());
  out.sensing.duty_estimate =
      timeline.free_fall_duration /
      (t_cool + timeline.free_fall_duration + proto.stiff_duration());

  if (impulse && impulse->magnitude > 0) {
    // Reconstruct the kick from the displacement of the final position
    // readout relative to a kick-free reference with identical noise.
    State3D end_ref;
    if (spec.mode == RunMode::deterministic) {
      TrajectoryRecord unused;
      end_ref = evolve_deterministic(start, timeline.schedule, mass, effective,
                                     std::nullopt, &unused);
    } else {
      double w_max = 0;
      for (double w : proto.omega_stiff) w_max = std::max(w_max, w);
      const double dt = (2 * pi / w_max) / spec.stochastic_dt_divisor;
      StochasticOptions sopt;
      sopt.record_times = effective.record_times;
      sopt.covariance_options = spec.integrator;
      TrajectoryRecord ref_rec = stochastic_trajectory(
          start, timeline.schedule, mass, dt, spec.seed, sopt);
      end_ref = ref_rec.states.back();
    }
    Vec3 recovered;
    for (int i = 0; i < 3; ++i) {
      // A readout rotation of (2k+1) quarter periods maps p/(m w) onto
      // +/- x; invert with the matching sign.
      const double sign = (proto.k_stiff[i] % 2 == 0) ? 1.0 : -1.0;
      const double dx =
          out.state_at_end.axes[i].mean_x - end_ref.axes[i].mean_x;
      recovered[i] = sign * mass * proto.omega_stiff[i] * dx;
    }
    out.sensing.recovered_impulse = recovered;
  }

  return out;
}

}  // namespace levsq

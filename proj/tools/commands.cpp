#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "levsq/constants.hpp"
#include "levsq/csv.hpp"
#include "levsq/decoherence.hpp"
#include "levsq/dynamics.hpp"
#include "levsq/errors.hpp"
#include "levsq/focal_optics.hpp"
#include "levsq/gaussian_state.hpp"
#include "levsq/params.hpp"
#include "levsq/protocol.hpp"

namespace levsq {
namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  std::ostringstream o;
  o.precision(12);
  o << v;
  return o.str();
}

std::string triple(const Vec3& v) {
  return num(v[0]) + " " + num(v[1]) + " " + num(v[2]);
}

const char* axis_letter(int axis) {
  static const char* names[3] = {"x", "y", "z"};
  return names[axis];
}

// Hard parameter violations coming from a config file are config errors as
// far as the CLI contract goes; soft warnings land on stderr.
void vet_params(const ExperimentParams& p) {
  std::vector<std::string> warnings;
  try {
    warnings = p.validate();
  } catch (const invalid_parameter_error& e) {
    throw config_error(e.what());
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::vector<double> sweep_grid(double lo, double hi, int n, SweepScale scale) {
  if (n < 2) throw config_error("sweep_points must be >= 2");
  if (!(hi > lo)) throw config_error("sweep range must have sweep_hi > sweep_lo");
  std::vector<double> g(n);
  if (scale == SweepScale::log10) {
    if (lo <= 0) throw config_error("log sweep needs sweep_lo > 0");
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (int i = 0; i < n; ++i)
      g[i] = std::pow(10.0, llo + (lhi - llo) * i / (n - 1));
  } else {
    for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  }
  return g;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

// Runs f(i) for i in [0, n) across a small thread pool. Work items may
// finish in any order; callers store results by index so output stays
// deterministic. The first exception thrown by any item propagates.
template <class F>
void parallel_for(int n, int threads, F&& f) {
  int t = threads > 0 ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  t = std::max(1, std::min({t, n, 64}));
  if (t <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::future<void>> workers;
  workers.reserve(t);
  for (int w = 0; w < t; ++w) {
    workers.push_back(std::async(std::launch::async, [&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
    }));
  }
  for (auto& w : workers) w.get();
}

// Stiff-trap description feeding the protocol layer: frequencies plus the
// per-axis decoherence rates (photon recoil while the light is on, thermal
// emission always).
struct TrapSetup {
  Vec3 omega = {0, 0, 0};
  Vec3 recoil = {0, 0, 0};
  Vec3 blackbody = {0, 0, 0};
  Vec3 gamma_stiff = {0, 0, 0};
  double power = 0.0;
  double focal_intensity = 0.0;
  bool from_optics = false;
};

Vec3 blackbody_per_axis(const ExperimentParams& p, const Vec3& omega) {
  const double m = sphere_mass(p);
  Vec3 out{};
  for (int i = 0; i < 3; ++i) {
    const double x0 = std::sqrt(constants.hbar / (m * omega[i]));
    out[i] = blackbody_decoherence_rate(p, x0);
  }
  return out;
}

TrapSetup synthetic_trap(const RunConfig& rc) {
  const double wz = rc.params.long_freq;
  if (rc.perp_ratio <= 0) throw config_error("perp_ratio must be positive");
  TrapSetup t;
  t.omega = {rc.perp_ratio * wz, rc.perp_ratio * wz, wz};
  t.recoil = {rc.gamma_perp_over_omega * t.omega[0],
              rc.gamma_perp_over_omega * t.omega[1],
              rc.gamma_z_over_omega * t.omega[2]};
  t.blackbody = blackbody_per_axis(rc.params, t.omega);
  for (int i = 0; i < 3; ++i) t.gamma_stiff[i] = t.recoil[i] + t.blackbody[i];
  return t;
}

TrapSetup optics_trap(const RunConfig& rc) {
  BeamConfig beam;
  beam.numerical_aperture = rc.params.numerical_aperture;
  beam.wavelength = rc.params.wavelength;
  beam.filling_factor = rc.params.filling_factor;
  const TrapCharacterization tc =
      trap_characterization(rc.params, beam, rc.scatter);
  TrapSetup t;
  t.omega = tc.trap_freqs;
  t.recoil = tc.recoil_rates;
  t.blackbody = blackbody_per_axis(rc.params, t.omega);
  for (int i = 0; i < 3; ++i) t.gamma_stiff[i] = t.recoil[i] + t.blackbody[i];
  t.power = tc.power;
  t.focal_intensity = tc.focal_intensity;
  t.from_optics = true;
  return t;
}

TrapSetup make_trap(const RunConfig& rc) {
  return rc.use_optics ? optics_trap(rc) : synthetic_trap(rc);
}

// A characterized trap never lands exactly on a harmonic matching
// condition, but the bang-bang schedule needs strictly commensurate
// quarter periods. Within a 5% window we pin the axial frequency and move
// the transverse ones onto the nearest commensurate grid, rescaling the
// recoil rates (which go as 1/omega at fixed power) to match. Outside the
// window the trap is simply not at a matching condition and the run is
// refused with a pointer at the NA sweep.
struct SnapResult {
  Vec3 omega = {0, 0, 0};
  Vec3 adjustment = {1, 1, 1};  // omega_snapped / omega_raw
  std::array<int, 3> k = {0, 0, 0};
};

SnapResult snap_to_harmonic(const Vec3& omega_raw, int max_k) {
  const HarmonicAssignment ha =
      check_harmonic_condition(omega_raw, max_k, 0.05);
  if (!ha.satisfiable) {
    throw config_error(
        "trap frequencies " + triple(omega_raw) +
        " rad/s are more than 5% away from every harmonic matching "
        "condition with k <= " +
        std::to_string(max_k) +
        "; pick a numerical aperture near a frequency-ratio crossing "
        "(see the sweep-na subcommand) or use a synthetic trap");
  }
  SnapResult s;
  s.k = ha.k;
  const double base = omega_raw[axis_z] / (2 * ha.k[axis_z] + 1);
  for (int i = 0; i < 3; ++i) {
    s.omega[i] = (2 * ha.k[i] + 1) * base;
    s.adjustment[i] = s.omega[i] / omega_raw[i];
  }
  return s;
}

void trap_comments(CsvWriter& csv, const RunConfig& rc, const TrapSetup& t) {
  csv.comment(std::string("trap source = ") +
              (t.from_optics ? "focal optics" : "synthetic"));
  if (t.from_optics) {
    csv.comment("laser power_w = " + num(t.power) +
                ", focal irradiance_w_m2 = " + num(t.focal_intensity) +
                ", numerical_aperture = " + num(rc.params.numerical_aperture));
  }
  csv.comment("stiff trap freqs_hz = " +
              triple({t.omega[0] / (2 * pi), t.omega[1] / (2 * pi),
                      t.omega[2] / (2 * pi)}));
  csv.comment("recoil rates_hz = " + triple(t.recoil));
  csv.comment("blackbody rates_hz = " + triple(t.blackbody));
}

void protocol_comments(CsvWriter& csv, const SqueezeProtocol& proto,
                       const ProtocolTimeline& tl) {
  csv.comment("protocol: n_cycles = " + std::to_string(proto.n_cycles) +
              ", soft/stiff freq ratio = " +
              num(proto.omega_soft[0] / proto.omega_stiff[0]) +
              ", t_soft_s = " + num(proto.soft_duration()) +
              ", t_stiff_s = " + num(proto.stiff_duration()));
  csv.comment("quarter counts: soft = " + std::to_string(2 * proto.k_soft[0] + 1) +
              " " + std::to_string(2 * proto.k_soft[1] + 1) + " " +
              std::to_string(2 * proto.k_soft[2] + 1) + ", stiff = " +
              std::to_string(2 * proto.k_stiff[0] + 1) + " " +
              std::to_string(2 * proto.k_stiff[1] + 1) + " " +
              std::to_string(2 * proto.k_stiff[2] + 1));
  csv.comment("timeline_s: trap off at " + num(tl.t_off) + ", back on at " +
              num(tl.t_on) + ", readout at " + num(tl.t_end));
}

void sensing_comments(CsvWriter& csv, const SensingResult& sens,
                      const DerivedScales& scales,
                      const std::optional<ImpulseEvent>& impulse) {
  csv.comment("squeezing_db at trap-off = " +
              triple(sens.metrics_at_toff.squeezing_db));
  csv.comment("momentum variance_kg2_m2_s2 at trap-off = " +
              triple(sens.metrics_at_toff.var_p_absolute));
  csv.comment("purity at trap-off = " + triple(sens.metrics_at_toff.purity));
  csv.comment("min detectable impulse_kg_m_s = " +
              triple(sens.min_detectable_impulse));
  csv.comment("sql impulse_kg_m_s = " + triple(scales.sql_impulse));
  csv.comment("db below sql = " + triple(sens.db_below_sql));
  csv.comment("readout shot noise_m = " + triple(sens.shot_noise));
  csv.comment("duty estimate = " + num(sens.duty_estimate));
  if (impulse) {
    csv.comment("injected impulse_kg_m_s = " + num(impulse->magnitude) +
                " along " + triple(impulse->direction) + " at t_s = " +
                num(impulse->time));
  }
  if (sens.recovered_impulse) {
    csv.comment("recovered impulse_kg_m_s = " +
                triple(*sens.recovered_impulse));
  }
}

void emit_trajectory(CsvWriter& csv, const TrajectoryRecord& traj) {
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const AxisGaussianState& s = traj.states[i].axes[a];
      csv.begin_row();
      csv.field(traj.times[i])
          .field(std::string(axis_letter(a)))
          .field(s.mean_x)
          .field(s.mean_p)
          .field(s.var_x)
          .field(s.var_p)
          .field(s.cov_xp)
          .field(purity(s));
      csv.end_row();
    }
  }
}

CsvWriter trajectory_writer() {
  return CsvWriter("trajectory",
                   {"time_s", "axis", "mean_x_m", "mean_p_kg_m_s", "var_x_m2",
                    "var_p_kg2_m2_s2", "cov_xp_kg_m2_s", "purity"});
}

std::string seed_path(const std::string& out, int index) {
  const auto slash = out.find_last_of('/');
  const auto dot = out.find_last_of('.');
  const std::string tag = "_seed" + std::to_string(index);
  if (dot == std::string::npos ||
      (slash != std::string::npos && dot < slash)) {
    return out + tag;
  }
  return out.substr(0, dot) + tag + out.substr(dot);
}

}  // namespace

void cmd_budget(const RunConfig& rc) {
  vet_params(rc.params);
  const ExperimentParams& p = rc.params;
  const TrapSetup trap = make_trap(rc);
  const DerivedScales scales = derive_scales(p, trap.omega);
  const DecoherenceBudget budget = assemble_budget(trap.recoil, p, scales);

  CsvWriter csv("budget", {"channel", "axis", "rate_hz", "scope"});
  trap_comments(csv, rc, trap);
  csv.comment("blackbody photon emission_hz = " +
              num(blackbody_emission_rate(p)));
  csv.comment("trap-off momentum diffusion_kg2_m2_s3 = " +
              num(blackbody_momentum_diffusion(p, scales,
                                               trap.omega[axis_z])));
  csv.comment("gas collision probability over free_fall (" +
              num(rc.free_fall) + " s) = " +
              num(collision_probability(p, rc.free_fall)));
  for (const auto& note : budget.notes) csv.comment(note);

  for (int a = 0; a < 3; ++a) {
    csv.begin_row();
    csv.field(std::string("recoil"))
        .field(std::string(axis_letter(a)))
        .field(budget.recoil[a])
        .field(std::string("trap_on"));
    csv.end_row();
  }
  csv.begin_row();
  csv.field(std::string("blackbody_decoherence"))
      .field(std::string("all"))
      .field(budget.blackbody)
      .field(std::string("always"));
  csv.end_row();
  csv.begin_row();
  csv.field(std::string("blackbody_emission"))
      .field(std::string("all"))
      .field(blackbody_emission_rate(p))
      .field(std::string("always"));
  csv.end_row();
  csv.begin_row();
  csv.field(std::string("gas_collision"))
      .field(std::string("all"))
      .field(budget.gas_collision)
      .field(std::string("event"));
  csv.end_row();
  for (int a = 0; a < 3; ++a) {
    csv.begin_row();
    csv.field(std::string("total"))
        .field(std::string(axis_letter(a)))
        .field(budget.total_trap_on[a])
        .field(std::string("trap_on"));
    csv.end_row();
  }
  for (int a = 0; a < 3; ++a) {
    csv.begin_row();
    csv.field(std::string("total"))
        .field(std::string(axis_letter(a)))
        .field(budget.total_trap_off[a])
        .field(std::string("trap_off"));
    csv.end_row();
  }
  csv.flush(rc.out);
}

void cmd_sweep_decoherence(const RunConfig& rc) {
  vet_params(rc.params);
  const ExperimentParams& p = rc.params;
  const double wz = p.long_freq;
  const double mass = sphere_mass(p);

  std::vector<double> grid =
      rc.sweep_points > 0
          ? sweep_grid(rc.sweep_lo, rc.sweep_hi, rc.sweep_points,
                       rc.sweep_scale)
          : sweep_grid(1e-3, 1.0, 25, SweepScale::log10);
  for (double g : grid) {
    if (g < 0) throw config_error("decoherence sweep needs gamma/omega >= 0");
  }
  const std::vector<int>& cycles = rc.cycles_list;
  for (int n : cycles) {
    if (n < 1) throw config_error("cycles_list entries must be >= 1");
  }

  const int total = static_cast<int>(grid.size() * cycles.size());
  std::vector<double> squeezing(total, nan_value);
  parallel_for(total, rc.threads, [&](int idx) {
    const int ni = idx / static_cast<int>(grid.size());
    const int gi = idx % static_cast<int>(grid.size());
    const double g = grid[gi];
    const Vec3 omega = {wz, wz, wz};
    const Vec3 gamma = {g * wz, g * wz, g * wz};
    const SqueezeProtocol proto =
        make_protocol(omega, rc.freq_ratio, cycles[ni],
                      p.measurement_efficiency, gamma, rc.max_k,
                      rc.residual_tol);
    const ProtocolTimeline tl = build_bangbang_schedule(proto, 0.0, false);
    RunSpec spec;
    spec.mode = RunMode::deterministic;
    const ProtocolRunResult res = run_protocol(mass, proto, tl, spec);
    squeezing[idx] = res.sensing.metrics_at_toff.squeezing_db[axis_z];
  });

  CsvWriter csv("sweep-decoherence",
                {"gamma_over_omega", "n_cycles", "squeezing_db",
                 "asymptotic_db"});
  csv.comment("single-mode sweep: all axes at omega_hz = " +
              num(wz / (2 * pi)));
  csv.comment("soft/stiff freq ratio = " + num(rc.freq_ratio) +
              ", measurement efficiency = " +
              triple(p.measurement_efficiency));
  csv.comment("squeezing_db: conditional momentum variance at trap-off vs "
              "the stiff-trap zero point; asymptotic_db: closed-form "
              "large-cycle limit of the unconditional protocol");
  const double zero_point = 0.5 * constants.hbar * mass * wz;
  for (std::size_t ni = 0; ni < cycles.size(); ++ni) {
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      const double g = grid[gi];
      const double asym_db =
          g > 0 ? 10.0 * std::log10(zero_point /
                                    asymptotic_variance(
                                        mass, wz, rc.freq_ratio * wz, g * wz))
                : nan_value;
      csv.begin_row();
      csv.field(g)
          .field(cycles[ni])
          .field(squeezing[ni * grid.size() + gi])
          .field(asym_db);
      csv.end_row();
    }
  }
  csv.flush(rc.out);
}

void cmd_sweep_frequency(const RunConfig& rc) {
  vet_params(rc.params);
  const ExperimentParams& p = rc.params;
  const double mass = sphere_mass(p);
  const TrapSetup trap = synthetic_trap(rc);

  std::vector<double> grid =
      rc.sweep_points > 0
          ? sweep_grid(rc.sweep_lo, rc.sweep_hi, rc.sweep_points,
                       rc.sweep_scale)
          : linspace(0.05, 0.95, 19);
  for (double r : grid) {
    if (r <= 0 || r >= 1)
      throw config_error("frequency sweep needs ratios inside (0, 1)");
  }
  const std::vector<int>& cycles = rc.cycles_list;
  for (int n : cycles) {
    if (n < 1) throw config_error("cycles_list entries must be >= 1");
  }

  const int total = static_cast<int>(grid.size() * cycles.size());
  std::vector<SqueezeMetrics> metrics(total);
  parallel_for(total, rc.threads, [&](int idx) {
    const int ni = idx / static_cast<int>(grid.size());
    const int gi = idx % static_cast<int>(grid.size());
    const SqueezeProtocol proto =
        make_protocol(trap.omega, grid[gi], cycles[ni],
                      p.measurement_efficiency, trap.gamma_stiff, rc.max_k,
                      rc.residual_tol);
    const ProtocolTimeline tl = build_bangbang_schedule(proto, 0.0, false);
    RunSpec spec;
    spec.mode = RunMode::deterministic;
    const ProtocolRunResult res = run_protocol(mass, proto, tl, spec);
    metrics[idx] = res.sensing.metrics_at_toff;
  });

  CsvWriter csv("sweep-frequency",
                {"freq_ratio", "n_cycles", "axis", "squeezing_db",
                 "momentum_width_kg_m_s"});
  trap_comments(csv, rc, trap);
  csv.comment("measurement efficiency = " + triple(p.measurement_efficiency));
  for (std::size_t ni = 0; ni < cycles.size(); ++ni) {
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      const SqueezeMetrics& m = metrics[ni * grid.size() + gi];
      for (int a = 0; a < 3; ++a) {
        csv.begin_row();
        csv.field(grid[gi])
            .field(cycles[ni])
            .field(std::string(axis_letter(a)))
            .field(m.squeezing_db[a])
            .field(std::sqrt(m.var_p_absolute[a]));
        csv.end_row();
      }
    }
  }
  csv.flush(rc.out);
}

void cmd_sweep_na(const RunConfig& rc) {
  vet_params(rc.params);
  const ExperimentParams& p = rc.params;

  std::vector<double> grid =
      rc.sweep_points > 0
          ? sweep_grid(rc.sweep_lo, rc.sweep_hi, rc.sweep_points,
                       rc.sweep_scale)
          : linspace(0.55, 0.95, 21);
  for (double na : grid) {
    if (na <= 0 || na >= 1)
      throw config_error("numerical aperture sweep must stay inside (0, 1)");
  }

  struct Row {
    bool no_trap = false;
    double omega_z = nan_value;
    double ratio = nan_value;
    double gamma_z_ratio = nan_value;
    double gamma_perp_ratio = nan_value;
    double power = nan_value;
  };
  std::vector<Row> rows(grid.size());
  parallel_for(static_cast<int>(grid.size()), rc.threads, [&](int i) {
    BeamConfig beam;
    beam.numerical_aperture = grid[i];
    beam.wavelength = p.wavelength;
    beam.filling_factor = p.filling_factor;
    try {
      const TrapCharacterization tc =
          trap_characterization(p, beam, rc.scatter);
      Row r;
      r.omega_z = tc.trap_freqs[axis_z];
      const double perp =
          0.5 * (tc.trap_freqs[axis_x] + tc.trap_freqs[axis_y]);
      r.ratio = perp / tc.trap_freqs[axis_z];
      r.gamma_z_ratio = tc.recoil_rates[axis_z] / tc.trap_freqs[axis_z];
      r.gamma_perp_ratio =
          0.5 * (tc.recoil_rates[axis_x] + tc.recoil_rates[axis_y]) / perp;
      r.power = tc.power;
      rows[i] = r;
    } catch (const no_trap_error&) {
      rows[i].no_trap = true;
    }
  });

  CsvWriter csv("sweep-na",
                {"na", "no_trap", "omega_z_rad_s", "omega_perp_over_omega_z",
                 "gamma_z_over_omega_z", "gamma_perp_over_omega_perp",
                 "power_w"});
  csv.comment("filling factor = " + num(p.filling_factor) +
              ", wavelength_m = " + num(p.wavelength) +
              (p.solve_power ? ", power solved for omega_z_hz = " +
                                   num(p.long_freq / (2 * pi))
                             : ", fixed power_w = " + num(p.laser_power)));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Row& r = rows[i];
    csv.begin_row();
    csv.field(grid[i])
        .field(r.no_trap ? 1 : 0)
        .field(r.omega_z)
        .field(r.ratio)
        .field(r.gamma_z_ratio)
        .field(r.gamma_perp_ratio)
        .field(r.power);
    csv.end_row();
  }
  // Matching-condition crossings by linear interpolation between adjacent
  // trapped grid points.
  const double targets[2] = {3.0, 5.0 / 3.0};
  for (double target : targets) {
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const Row& a = rows[i];
      const Row& b = rows[i + 1];
      if (a.no_trap || b.no_trap) continue;
      if ((a.ratio - target) * (b.ratio - target) > 0) continue;
      const double f = (target - a.ratio) / (b.ratio - a.ratio);
      csv.comment("ratio = " + num(target) + " crossing at na ~ " +
                  num(grid[i] + f * (grid[i + 1] - grid[i])));
    }
  }
  csv.flush(rc.out);
}

void cmd_run(const RunConfig& rc) {
  vet_params(rc.params);
  const ExperimentParams& p = rc.params;
  const double mass = sphere_mass(p);

  TrapSetup trap = make_trap(rc);
  SnapResult snap;
  if (trap.from_optics) {
    snap = snap_to_harmonic(trap.omega, rc.max_k);
    for (int i = 0; i < 3; ++i) {
      trap.recoil[i] /= snap.adjustment[i];
      trap.omega[i] = snap.omega[i];
    }
    trap.blackbody = blackbody_per_axis(p, trap.omega);
    for (int i = 0; i < 3; ++i)
      trap.gamma_stiff[i] = trap.recoil[i] + trap.blackbody[i];
  }
  const DerivedScales scales = derive_scales(p, trap.omega);

  const SqueezeProtocol proto =
      make_protocol(trap.omega, rc.freq_ratio, rc.n_cycles,
                    p.measurement_efficiency, trap.gamma_stiff, rc.max_k,
                    rc.residual_tol);
  const ProtocolTimeline tl = build_bangbang_schedule(
      proto, rc.free_fall, rc.gravity, trap.blackbody, rc.vertical_axis);

  RunSpec spec;
  spec.mode = rc.mode == "stochastic" ? RunMode::stochastic
                                      : RunMode::deterministic;
  spec.seed = rc.seed;
  spec.readout_time = rc.readout_time;
  spec.record_times = linspace(0.0, tl.t_end, rc.record_points);
  if (rc.impulse_dp != 0.0) {
    ImpulseEvent ev;
    ev.magnitude = std::abs(rc.impulse_dp);
    ev.direction = {0, 0, 0};
    ev.direction[rc.impulse_axis] = rc.impulse_dp > 0 ? 1.0 : -1.0;
    ev.time = rc.impulse_time < 0 ? tl.t_off + 0.5 * tl.free_fall_duration
                                  : rc.impulse_time;
    if (ev.time < 0 || ev.time > tl.t_end) {
      throw config_error("impulse_time outside the protocol timeline [0, " +
                         num(tl.t_end) + "] s");
    }
    spec.impulse = ev;
  }

  const auto annotate = [&](CsvWriter& csv, const ProtocolRunResult& res,
                            std::uint64_t seed_used) {
    trap_comments(csv, rc, trap);
    if (trap.from_optics) {
      csv.comment("frequencies snapped onto the harmonic matching grid, "
                  "relative adjustment = " +
                  triple({snap.adjustment[0] - 1.0, snap.adjustment[1] - 1.0,
                          snap.adjustment[2] - 1.0}));
    }
    protocol_comments(csv, proto, tl);
    csv.comment("mode = " + rc.mode + ", seed = " +
                std::to_string(seed_used));
    csv.comment("gas collision probability over the timeline = " +
                num(collision_probability(p, tl.t_end)));
    sensing_comments(csv, res.sensing, scales, spec.impulse);
  };

  if (rc.ensemble <= 1) {
    const ProtocolRunResult res = run_protocol(mass, proto, tl, spec);
    CsvWriter csv = trajectory_writer();
    annotate(csv, res, spec.seed);
    emit_trajectory(csv, res.trajectory);
    csv.flush(rc.out);
    return;
  }

  if (rc.mode != "stochastic") {
    throw config_error("ensemble > 1 requires mode = stochastic");
  }
  if (rc.out.empty()) {
    throw config_error("ensemble > 1 requires an output path (--out)");
  }

  const int n = rc.ensemble;
  std::vector<ProtocolRunResult> results(n);
  parallel_for(n, rc.threads, [&](int i) {
    RunSpec s = spec;
    s.seed = rc.seed + static_cast<std::uint64_t>(i);
    results[i] = run_protocol(mass, proto, tl, s);
  });

  const std::vector<double>& times = results[0].trajectory.times;
  for (const auto& res : results) {
    if (res.trajectory.times.size() != times.size()) {
      throw numerical_error(
          "ensemble trajectories recorded inconsistent time grids");
    }
  }

  CsvWriter agg("ensemble",
                {"time_s", "axis", "n_traj", "mean_of_mean_x_m",
                 "var_of_mean_x_m2", "mean_var_x_m2", "mean_of_mean_p_kg_m_s",
                 "var_of_mean_p_kg2_m2_s2", "mean_var_p_kg2_m2_s2",
                 "total_var_x_m2", "total_var_p_kg2_m2_s2"});
  annotate(agg, results[0], rc.seed);
  agg.comment("ensemble of " + std::to_string(n) + " trajectories, seeds " +
              std::to_string(rc.seed) + " .. " +
              std::to_string(rc.seed + static_cast<std::uint64_t>(n - 1)));
  agg.comment("total variances combine the spread of conditional means "
              "with the mean conditional variance");
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (int a = 0; a < 3; ++a) {
      double mx = 0, mp = 0, vx = 0, vp = 0;
      for (const auto& res : results) {
        const AxisGaussianState& s = res.trajectory.states[ti].axes[a];
        mx += s.mean_x;
        mp += s.mean_p;
        vx += s.var_x;
        vp += s.var_p;
      }
      mx /= n;
      mp /= n;
      vx /= n;
      vp /= n;
      double sx = 0, sp = 0;
      for (const auto& res : results) {
        const AxisGaussianState& s = res.trajectory.states[ti].axes[a];
        sx += (s.mean_x - mx) * (s.mean_x - mx);
        sp += (s.mean_p - mp) * (s.mean_p - mp);
      }
      const double ens_vx = sx / (n - 1);
      const double ens_vp = sp / (n - 1);
      agg.begin_row();
      agg.field(times[ti])
          .field(std::string(axis_letter(a)))
          .field(n)
          .field(mx)
          .field(ens_vx)
          .field(vx)
          .field(mp)
          .field(ens_vp)
          .field(vp)
          .field(ens_vx + vx)
          .field(ens_vp + vp);
      agg.end_row();
    }
  }

  // Per-seed trajectory files are useful for small ensembles; for large
  // ones they would just flood the directory.
  if (n <= 64) {
    for (int i = 0; i < n; ++i) {
      CsvWriter csv = trajectory_writer();
      annotate(csv, results[i], rc.seed + static_cast<std::uint64_t>(i));
      emit_trajectory(csv, results[i].trajectory);
      csv.flush(seed_path(rc.out, i));
    }
  }
  agg.flush(rc.out);
}

}  // namespace levsq

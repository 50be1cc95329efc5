// Microbenchmarks for the hot paths: focal-field evaluation, covariance
// integration and stochastic trajectory stepping. Run with
// --benchmark_min_time=0.1 for a quick pass.

#include <benchmark/benchmark.h>

#include "levsq/constants.hpp"
#include "levsq/dynamics.hpp"
#include "levsq/focal_optics.hpp"
#include "levsq/gaussian_state.hpp"
#include "levsq/params.hpp"
#include "levsq/protocol.hpp"

using namespace levsq;

namespace {

BeamConfig default_beam(int nodes) {
  BeamConfig beam;
  beam.numerical_aperture = 0.85;
  beam.wavelength = 1550e-9;
  beam.power = 1.0;
  beam.quad_nodes = nodes;
  return beam;
}

void BM_FocalFieldConstruct(benchmark::State& state) {
  const BeamConfig beam = default_beam(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    FocalField field(beam);
    benchmark::DoNotOptimize(field.wavenumber());
  }
}
BENCHMARK(BM_FocalFieldConstruct)->Arg(32)->Arg(64)->Arg(128);

void BM_FocalFieldSample(benchmark::State& state) {
  const FocalField field(default_beam(static_cast<int>(state.range(0))));
  const double lam = field.beam().wavelength;
  int i = 0;
  for (auto _ : state) {
    const double s = 0.1 * lam * static_cast<double>(i++ % 7);
    benchmark::DoNotOptimize(field.intensity({s, 0.5 * s, 0.25 * lam}));
  }
}
BENCHMARK(BM_FocalFieldSample)->Arg(32)->Arg(64)->Arg(128);

void BM_OpticalForce(benchmark::State& state) {
  const ExperimentParams p;
  const FocalField field(default_beam(64));
  const Polarizability pol = polarizability(p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        optical_force(field, pol, {0, 0, 0.2 * p.wavelength}));
  }
}
BENCHMARK(BM_OpticalForce);

// One soft/stiff squeezing cycle of the conditional covariance flow.
void BM_IntegrateCycle(benchmark::State& state) {
  const double mass = 4.2893e-18;
  const double omega = 2 * pi * 50e3;
  const double ws = 0.5 * omega;
  ScheduleSegment soft;
  soft.duration = pi / (2 * ws);
  soft.omega = {ws, ws, ws};
  soft.gamma = {0.05 * omega, 0.05 * omega, 0.05 * omega};
  soft.eta = {0.2, 0.2, 0.2};
  soft.omega_ref = {omega, omega, omega};
  ScheduleSegment stiff = soft;
  stiff.duration = pi / (2 * omega);
  stiff.omega = {omega, omega, omega};
  stiff.gamma = {0.1 * omega, 0.1 * omega, 0.1 * omega};
  const State3D start = ground_state(mass, {omega, omega, omega});
  for (auto _ : state) {
    State3D st = integrate_covariances(start, soft, mass);
    st = integrate_covariances(st, stiff, mass);
    benchmark::DoNotOptimize(st.axes[0].var_p);
  }
}
BENCHMARK(BM_IntegrateCycle);

void BM_QuarterAnalytic(benchmark::State& state) {
  const double mass = 4.2893e-18;
  const double omega = 2 * pi * 50e3;
  ScheduleSegment seg;
  seg.duration = pi / (2 * omega);
  seg.omega = {omega, omega, omega};
  seg.gamma = {0.1 * omega, 0.1 * omega, 0.1 * omega};
  const State3D start = ground_state(mass, {omega, omega, omega});
  for (auto _ : state) {
    benchmark::DoNotOptimize(propagate_quarter_analytic(start, seg, mass));
  }
}
BENCHMARK(BM_QuarterAnalytic);

// Full conditional trajectory through a two-cycle bang-bang schedule;
// the counter reports Euler-Maruyama steps per second.
void BM_StochasticTrajectory(benchmark::State& state) {
  const double mass = 4.2893e-18;
  const double omega = 2 * pi * 50e3;
  const Vec3 freqs = {omega, omega, omega};
  const Vec3 gamma = {0.1 * omega, 0.1 * omega, 0.1 * omega};
  const SqueezeProtocol proto =
      make_protocol(freqs, 0.5, 2, {0.2, 0.2, 0.2}, gamma);
  const ProtocolTimeline tl = build_bangbang_schedule(proto, 0.0, false);
  const State3D start = ground_state(mass, freqs);
  const double dt = 2 * pi / omega / 500.0;
  StochasticOptions opt;
  opt.record_innovations = false;
  std::uint64_t seed = 1;
  const long steps =
      static_cast<long>(tl.schedule.total_duration() / dt + 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        stochastic_trajectory(start, tl.schedule, mass, dt, seed++, opt));
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_StochasticTrajectory);

}  // namespace

BENCHMARK_MAIN();

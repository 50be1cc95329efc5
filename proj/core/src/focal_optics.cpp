#include "levsq/focal_optics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>
#include <Eigen/Dense>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

namespace {

struct GaussRule {
  std::vector<double> node;    // on [-1, 1]
  std::vector<double> weight;
};

// Legendre nodes by Newton iteration on the three-term recurrence. Cached
// per order; the rule is a pure function of n, so thread-local caches stay
// deterministic.
const GaussRule& gauss_rule(int n) {
  thread_local std::map<int, GaussRule> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussRule rule;
  rule.node.resize(n);
  rule.weight.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1) * x * p2 - (j - 1) * p3) / j;
      }
      pp = n * (x * p1 - p2) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.node[i] = -x;
    rule.node[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weight[i] = w;
    rule.weight[n - 1 - i] = w;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

constexpr int max_aperture_nodes = 4096;

}  // namespace

double Polarizability::cross_section(double wavenumber) const {
  return alpha2 * wavenumber / constants.eps0;
}

Polarizability polarizability(const ExperimentParams& p) {
  p.validate();
  const double eps_r = p.dielectric_const.real();
  const double k = 2.0 * pi / p.wavelength;
  Polarizability pol;
  pol.alpha1 = 3.0 * constants.eps0 * sphere_volume(p) * (eps_r - 1.0) /
               (eps_r + 2.0);
  pol.alpha2 = k * k * k * pol.alpha1 * pol.alpha1 / (6.0 * pi * constants.eps0);
  return pol;
}

// ---------------------------------------------------------------------------
// Focal field
// ---------------------------------------------------------------------------

FocalField::FocalField(const BeamConfig& beam) : beam_(beam) {
  if (!(beam.numerical_aperture > 0) || !(beam.numerical_aperture < 1))
    throw invalid_parameter_error("FocalField: NA must lie in (0, 1)");
  if (!(beam.wavelength > 0))
    throw invalid_parameter_error("FocalField: wavelength must be positive");
  if (!(beam.power > 0))
    throw invalid_parameter_error("FocalField: power must be positive");
  if (!(beam.filling_factor > 0))
    throw invalid_parameter_error("FocalField: filling factor must be positive");
  if (beam.quad_nodes < 8 || beam.quad_nodes > max_aperture_nodes / 2)
    throw invalid_parameter_error("FocalField: quad_nodes out of range");

  k_ = 2.0 * pi / beam.wavelength;
  // Pupil power integral: with the Gaussian apodization the fraction
  // Q = (f0^2 NA^2 / 4)(1 - exp(-2/f0^2)) of the normalization constant's
  // square reaches the focus; amp is fixed so the transmitted power equals
  // the configured beam power.
  const double f0 = beam.filling_factor;
  const double na = beam.numerical_aperture;
  const double q = 0.25 * f0 * f0 * na * na * (1.0 - std::exp(-2.0 / (f0 * f0)));
  amp_ = 0.5 * k_ *
         std::sqrt(beam.power * vacuum_impedance / (pi * q));

  // Convergence self-check near the focus: doubling the aperture rule must
  // leave the integrals unchanged to 1e-6 relative.
  const double lam = beam.wavelength;
  const double probes[4][2] = {
      {0.0, 0.0}, {0.25 * lam, 0.0}, {0.0, 0.5 * lam}, {0.5 * lam, -0.25 * lam}};
  for (const auto& pr : probes) {
    const auto a = integrals_with_nodes(pr[0], pr[1], beam.quad_nodes);
    const auto b = integrals_with_nodes(pr[0], pr[1], 2 * beam.quad_nodes);
    double na2 = 0, nb2 = 0, nd2 = 0;
    for (int j = 0; j < 3; ++j) {
      na2 += std::norm(a[j]);
      nb2 += std::norm(b[j]);
      nd2 += std::norm(a[j] - b[j]);
    }
    const double scale = std::max(na2, nb2);
    if (scale > 0 && nd2 > 1e-12 * scale) {
      std::ostringstream os;
      os.precision(17);
      os << "FocalField: aperture quadrature not converged at rho=" << pr[0]
         << " z=" << pr[1] << " (relative deviation "
         << std::sqrt(nd2 / scale) << " with " << beam.quad_nodes
         << " nodes)";
      throw numerical_error(os.str());
    }
  }
}

std::array<std::complex<double>, 3> FocalField::integrals_with_nodes(
    double rho, double z, int nodes) const {
  const double na = beam_.numerical_aperture;
  const double theta_max = std::asin(na);
  const double f0 = beam_.filling_factor;
  const std::complex<double> i_unit(0.0, 1.0);

  const GaussRule& rule = gauss_rule(nodes);
  std::complex<double> i00(0, 0), i01(0, 0), i02(0, 0);
  for (int j = 0; j < nodes; ++j) {
    const double theta = 0.5 * theta_max * (rule.node[j] + 1.0);
    const double w = 0.5 * theta_max * rule.weight[j];
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    const double pupil = std::exp(-st * st / (f0 * f0 * na * na));
    const double apod = pupil * std::sqrt(ct) * st;
    const double arg = k_ * rho * st;
    const std::complex<double> phase = std::exp(i_unit * (k_ * z * ct));
    const double j0 = std::cyl_bessel_j(0.0, arg);
    const double j1 = std::cyl_bessel_j(1.0, arg);
    const double j2 = std::cyl_bessel_j(2.0, arg);
    i00 += w * apod * (1.0 + ct) * j0 * phase;
    i01 += w * apod * st * j1 * phase;
    i02 += w * apod * (1.0 - ct) * j2 * phase;
  }
  return {i00, i01, i02};
}

std::array<std::complex<double>, 3> FocalField::radial_integrals(
    double rho, double z) const {
  // The Bessel and axial phases oscillate with total phase travel of order
  // k rho NA + k |z| (1 - cos theta_max); the rule order grows with it.
  const double na = beam_.numerical_aperture;
  const double travel =
      k_ * std::abs(rho) * na + k_ * std::abs(z) * (1.0 - std::sqrt(1 - na * na));
  int nodes = beam_.quad_nodes;
  const int needed = static_cast<int>(0.6 * travel) + 24;
  if (needed > nodes) nodes = needed;
  if (nodes > max_aperture_nodes) {
    std::ostringstream os;
    os << "FocalField: sample point (rho=" << rho << ", z=" << z
       << ") needs " << nodes << " aperture nodes, above the cap "
       << max_aperture_nodes;
    throw numerical_error(os.str());
  }
  return integrals_with_nodes(rho, z, nodes);
}

std::array<std::complex<double>, 3> FocalField::sample(const Vec3& r) const {
  const double rho = std::hypot(r[0], r[1]);
  const double phi = std::atan2(r[1], r[0]);
  const auto ints = radial_integrals(rho, r[2]);
  const std::complex<double> i00 = ints[0], i01 = ints[1], i02 = ints[2];
  const std::complex<double> i_unit(0.0, 1.0);

  std::array<std::complex<double>, 3> e;
  if (beam_.polarization == Polarization::linear_x) {
    const double c2 = std::cos(2.0 * phi), s2 = std::sin(2.0 * phi);
    e[0] = amp_ * (i00 + i02 * c2);
    e[1] = amp_ * (i02 * s2);
    e[2] = amp_ * (-2.0 * i_unit * i01 * std::cos(phi));
  } else {
    const std::complex<double> e2ip = std::exp(2.0 * i_unit * phi);
    const std::complex<double> eip = std::exp(i_unit * phi);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    e[0] = amp_ * inv_sqrt2 * (i00 + i02 * e2ip);
    e[1] = amp_ * inv_sqrt2 * i_unit * (i00 - i02 * e2ip);
    e[2] = amp_ * (-std::sqrt(2.0) * i_unit * i01 * eip);
  }
  return e;
}

double FocalField::intensity(const Vec3& r) const {
  const auto e = sample(r);
  return std::norm(e[0]) + std::norm(e[1]) + std::norm(e[2]);
}

double FocalField::irradiance(const Vec3& r) const {
  return 0.5 * constants.eps0 * constants.c * intensity(r);
}

double FocalField::axial_poynting(const Vec3& r) const {
  // For both supported polarizations the axial Poynting average reduces to
  // (|I00|^2 - |I02|^2), independent of azimuth.
  const double rho = std::hypot(r[0], r[1]);
  const auto ints = radial_integrals(rho, r[2]);
  return amp_ * amp_ * (std::norm(ints[0]) - std::norm(ints[2])) /
         (2.0 * vacuum_impedance);
}

double FocalField::transmitted_power(double z, double r_max,
                                     int subdivisions) const {
  if (!(r_max > 0) || subdivisions < 1)
    throw invalid_parameter_error(
        "transmitted_power: need positive radius and panel count");
  const GaussRule& rule = gauss_rule(8);
  double total = 0;
  const double dr = r_max / subdivisions;
  for (int panel = 0; panel < subdivisions; ++panel) {
    const double a = panel * dr;
    double acc = 0;
    for (std::size_t j = 0; j < rule.node.size(); ++j) {
      const double rho = a + 0.5 * dr * (rule.node[j] + 1.0);
      acc += 0.5 * dr * rule.weight[j] * rho *
             axial_poynting({rho, 0.0, z});
    }
    total += 2.0 * pi * acc;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Force, equilibrium, stiffness
// ---------------------------------------------------------------------------

Vec3 optical_force(const FocalField& field, const Polarizability& pol,
                   const Vec3& r) {
  const double h = field.beam().wavelength / 2000.0;
  const auto e0 = field.sample(r);
  Vec3 f = {0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    Vec3 rp = r, rm = r;
    rp[i] += h;
    rm[i] -= h;
    const auto ep = field.sample(rp);
    const auto em = field.sample(rm);
    std::complex<double> s(0, 0);
    for (int j = 0; j < 3; ++j) {
      const std::complex<double> grad = (ep[j] - em[j]) / (2.0 * h);
      s += std::conj(e0[j]) * grad;
    }
    f[i] = 0.5 * (pol.alpha1 * s.real() + pol.alpha2 * s.imag());
  }
  return f;
}

Vec3 find_equilibrium(const FocalField& field, const Polarizability& pol) {
  const double lam = field.beam().wavelength;
  auto fz = [&](double z) { return optical_force(field, pol, {0, 0, z})[2]; };

  // Scan the axis for restoring crossings (positive force upstream turning
  // negative downstream). Weak sidelobes of a tightly focused beam can hold
  // their own equilibria, so among the candidates keep the one sitting in
  // the brightest light: that is the trap the experiment loads.
  const int n_scan = 160;
  const double z_lo = -2.0 * lam, z_hi = 2.0 * lam;
  double prev_z = z_lo, prev_f = fz(z_lo);
  double a = 0, b = 0, fa = 0, fb = 0;
  double best_irr = -1.0;
  for (int i = 1; i <= n_scan; ++i) {
    const double z = z_lo + (z_hi - z_lo) * i / n_scan;
    const double f = fz(z);
    if (prev_f > 0 && f <= 0) {
      const double irr = field.irradiance({0, 0, 0.5 * (prev_z + z)});
      if (irr > best_irr) {
        best_irr = irr;
        a = prev_z;
        b = z;
        fa = prev_f;
        fb = f;
      }
    }
    prev_z = z;
    prev_f = f;
  }
  if (best_irr < 0) {
    throw no_trap_error(
        "find_equilibrium: no restoring axial force crossing within two "
        "wavelengths of the focus (scattering force exceeds the gradient "
        "force, or no trap at this aperture)");
  }

  boost::math::tools::eps_tolerance<double> tol(48);
  std::uintmax_t max_iter = 200;
  const auto bracket =
      boost::math::tools::toms748_solve(fz, a, b, fa, fb, tol, max_iter);
  const double z_eq = 0.5 * (bracket.first + bracket.second);

  // The residual is judged against the force scale of the bracket; an
  // absolute threshold would depend on beam power.
  const double f_res = std::abs(fz(z_eq));
  const double f_scale = std::max(std::abs(fa), std::abs(fb));
  if (f_res > 1e-9 * f_scale) {
    std::ostringstream os;
    os.precision(17);
    os << "find_equilibrium: residual axial force " << f_res
       << " N above tolerance " << 1e-9 * f_scale << " at z=" << z_eq;
    throw numerical_error(os.str());
  }

  // Stability checks: axial slope negative, transverse force restoring.
  const double h = lam / 500.0;
  if (fz(z_eq + h) - fz(z_eq - h) >= 0) {
    throw no_trap_error("find_equilibrium: axial curvature is not restoring");
  }
  if (optical_force(field, pol, {h, 0, z_eq})[0] >= 0 ||
      optical_force(field, pol, {0, h, z_eq})[1] >= 0) {
    throw no_trap_error(
        "find_equilibrium: transverse force is not restoring at the axial "
        "equilibrium");
  }
  return {0.0, 0.0, z_eq};
}

// ---------------------------------------------------------------------------
// Scatter patterns and recoil
// ---------------------------------------------------------------------------

ScatterPattern scatter_pattern(ScatterModel model) {
  auto density = [model](double cos_t) {
    if (model == ScatterModel::axial_dipole)
      return 3.0 * cos_t * cos_t / (4.0 * pi);
    return 3.0 * (1.0 + cos_t * cos_t) / (16.0 * pi);
  };

  const GaussRule& polar = gauss_rule(48);
  const int n_phi = 64;
  ScatterPattern out;
  double norm = 0;
  Vec3 qsq = {0, 0, 0};
  for (std::size_t iu = 0; iu < polar.node.size(); ++iu) {
    const double u = polar.node[iu];  // cos(theta)
    const double su = std::sqrt(std::max(0.0, 1.0 - u * u));
    const double w_u = polar.weight[iu] * density(u);
    for (int ip = 0; ip < n_phi; ++ip) {
      const double phi = 2.0 * pi * ip / n_phi;
      const double w = w_u * (2.0 * pi / n_phi);
      const double kx = su * std::cos(phi);
      const double ky = su * std::sin(phi);
      norm += w;
      // Momentum transfer per scattering event: outgoing direction minus
      // the incident z, squared per axis.
      qsq[0] += w * kx * kx;
      qsq[1] += w * ky * ky;
      qsq[2] += w * (u - 1.0) * (u - 1.0);
    }
  }
  if (std::abs(norm - 1.0) > 1e-6) {
    std::ostringstream os;
    os.precision(17);
    os << "scatter_pattern: angular distribution integrates to " << norm
       << ", expected 1";
    throw numerical_error(os.str());
  }
  out.norm = norm;
  out.qsq_over_k2 = qsq;
  return out;
}

Vec3 recoil_heating_rates(double irradiance, const Polarizability& pol,
                          double wavelength, double mass,
                          const Vec3& trap_freqs,
                          const ScatterPattern& pattern) {
  if (irradiance < 0 || !(wavelength > 0) || !(mass > 0))
    throw invalid_parameter_error("recoil_heating_rates: bad inputs");
  const double k = 2.0 * pi / wavelength;
  const double omega_l = constants.c * k;
  const double sigma = pol.cross_section(k);
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!(trap_freqs[i] > 0))
      throw invalid_parameter_error(
          "recoil_heating_rates: trap frequencies must be positive");
    out[i] = irradiance * sigma * k * k * pattern.qsq_over_k2[i] /
             (2.0 * mass * omega_l * trap_freqs[i]);
  }
  return out;
}

Vec3 recoil_low_na(const ExperimentParams& p, double na, double power,
                   const Vec3& trap_freqs) {
  if (!(na > 0) || !(na < 1) || !(power > 0))
    throw invalid_parameter_error("recoil_low_na: bad beam parameters");
  const double eps_r = p.dielectric_const.real();
  const double omega_l = 2.0 * pi * constants.c / p.wavelength;
  const double chi = (eps_r - 1.0) / (eps_r + 2.0);
  const double c8 = std::pow(constants.c, 8);
  const Vec3 coeff = {1.0 / 5.0, 2.0 / 5.0, 7.0 / 5.0};
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!(trap_freqs[i] > 0))
      throw invalid_parameter_error(
          "recoil_low_na: trap frequencies must be positive");
    out[i] = 3.0 * na * na * power * std::pow(omega_l, 7) * sphere_volume(p) *
             coeff[i] * chi * chi /
             (8.0 * pi * pi * p.density * trap_freqs[i] * c8);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trap characterization
// ---------------------------------------------------------------------------

TrapCharacterization trap_characterization(const ExperimentParams& p,
                                           const BeamConfig& beam,
                                           ScatterModel model) {
  p.validate();
  // The beam describes the optics; the particle parameters only pin the
  // wavelength (sphere and beam must agree) and the power policy.
  BeamConfig cfg = beam;
  cfg.wavelength = p.wavelength;
  if (p.solve_power) {
    cfg.power = 1.0;
  } else {
    cfg.power = beam.power > 0 ? beam.power : p.laser_power;
    if (!(cfg.power > 0))
      throw invalid_parameter_error(
          "trap_characterization: fixed-power mode needs a positive power");
  }

  const FocalField field(cfg);
  const Polarizability pol = polarizability(p);
  const double mass = sphere_mass(p);

  TrapCharacterization out;
  out.equilibrium = find_equilibrium(field, pol);

  // Stiffness by central differences of the force around the equilibrium.
  const double h = cfg.wavelength / 500.0;
  Eigen::Matrix3d kmat;
  for (int j = 0; j < 3; ++j) {
    Vec3 rp = out.equilibrium, rm = out.equilibrium;
    rp[j] += h;
    rm[j] -= h;
    const Vec3 fp = optical_force(field, pol, rp);
    const Vec3 fm = optical_force(field, pol, rm);
    for (int i = 0; i < 3; ++i) kmat(i, j) = -(fp[i] - fm[i]) / (2.0 * h);
  }
  // Central differences of a conservative-plus-scattering force leave a
  // small antisymmetric residue; the spring constants come from the
  // symmetric part.
  Eigen::Matrix3d ksym = 0.5 * (kmat + kmat.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(ksym);
  if (eig.info() != Eigen::Success)
    throw numerical_error("trap_characterization: eigen decomposition failed");

  // Assign each eigenpair to the axis its eigenvector points along. With
  // the circular-polarization degeneracy the transverse pair is an
  // arbitrary rotation, which is harmless because the eigenvalues match.
  std::array<int, 3> axis_of = {-1, -1, -1};
  std::array<bool, 3> vec_used = {false, false, false};
  for (int pick = 0; pick < 3; ++pick) {
    int best_axis = -1, best_vec = -1;
    double best = -1;
    for (int v = 0; v < 3; ++v) {
      if (vec_used[v]) continue;
      for (int axis = 0; axis < 3; ++axis) {
        if (axis_of[axis] >= 0) continue;
        const double mag = std::abs(eig.eigenvectors()(axis, v));
        if (mag > best) {
          best = mag;
          best_axis = axis;
          best_vec = v;
        }
      }
    }
    axis_of[best_axis] = best_vec;
    vec_used[best_vec] = true;
  }

  Vec3 spring;
  for (int axis = 0; axis < 3; ++axis) {
    const double kv = eig.eigenvalues()(axis_of[axis]);
    if (!(kv > 0)) {
      std::ostringstream os;
      os << "trap_characterization: stiffness eigenvalue " << kv
         << " N/m on axis " << axis << " is not restoring";
      throw no_trap_error(os.str());
    }
    spring[axis] = kv;
  }

  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.stiffness[i][j] = ksym(i, j);
    out.trap_freqs[i] = std::sqrt(spring[i] / mass);
  }
  out.focal_intensity = field.irradiance(out.equilibrium);
  out.power = cfg.power;

  if (p.solve_power) {
    // Stiffness is linear in power, so the frequency match is a single
    // exact rescale; the equilibrium position does not move.
    const double target = p.long_freq;
    const double scale = (target / out.trap_freqs[2]) *
                         (target / out.trap_freqs[2]);
    out.power *= scale;
    out.focal_intensity *= scale;
    for (int i = 0; i < 3; ++i) {
      out.trap_freqs[i] *= std::sqrt(scale);
      for (int j = 0; j < 3; ++j) out.stiffness[i][j] *= scale;
    }
  }

  out.recoil_rates =
      recoil_heating_rates(out.focal_intensity, pol, cfg.wavelength, mass,
                           out.trap_freqs, scatter_pattern(model));
  return out;
}

double find_na_for_ratio(const ExperimentParams& p, double target_ratio,
                         double na_lo, double na_hi, ScatterModel model) {
  if (!(na_lo > 0) || !(na_hi < 1) || !(na_lo < na_hi))
    throw invalid_parameter_error("find_na_for_ratio: bad aperture bracket");
  ExperimentParams q = p;
  q.solve_power = false;
  q.laser_power = 1.0;

  auto ratio_gap = [&](double na) {
    BeamConfig cfg;
    cfg.numerical_aperture = na;
    cfg.filling_factor = p.filling_factor;
    const TrapCharacterization tc = trap_characterization(q, cfg, model);
    const double perp = 0.5 * (tc.trap_freqs[0] + tc.trap_freqs[1]);
    return perp / tc.trap_freqs[2] - target_ratio;
  };

  const double f_lo = ratio_gap(na_lo);
  const double f_hi = ratio_gap(na_hi);
  if (f_lo * f_hi > 0) {
    std::ostringstream os;
    os << "find_na_for_ratio: ratio - " << target_ratio
       << " does not change sign over NA in [" << na_lo << ", " << na_hi
       << "] (endpoint gaps " << f_lo << ", " << f_hi << ")";
    throw invalid_parameter_error(os.str());
  }
  boost::math::tools::eps_tolerance<double> tol(20);
  std::uintmax_t max_iter = 80;
  const auto bracket = boost::math::tools::toms748_solve(
      ratio_gap, na_lo, na_hi, f_lo, f_hi, tol, max_iter);
  return 0.5 * (bracket.first + bracket.second);
}

}  // namespace levsq

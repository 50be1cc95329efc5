#include "levsq/gaussian_state.hpp"

#include <cmath>
#include <sstream>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

double purity(const AxisGaussianState& s) {
  return constants.hbar / (2.0 * std::sqrt(s.uncertainty_det()));
}

void check_physical(const AxisGaussianState& s, const char* context) {
  const double hbar = constants.hbar;
  const bool finite = std::isfinite(s.mean_x) && std::isfinite(s.mean_p) &&
                      std::isfinite(s.var_x) && std::isfinite(s.var_p) &&
                      std::isfinite(s.cov_xp);
  const double det = s.uncertainty_det();
  const double bound = hbar * hbar / 4.0 * (1.0 - physicality_tol);
  if (finite && s.var_x > 0 && s.var_p > 0 && det >= bound) return;

  std::ostringstream os;
  os.precision(17);
  os << context << ": unphysical Gaussian state: V_xx=" << s.var_x
     << " V_pp=" << s.var_p << " C_xp=" << s.cov_xp << " det=" << det
     << " bound=" << bound << " mean_x=" << s.mean_x << " mean_p=" << s.mean_p;
  throw physicality_error(os.str());
}

void check_physical(const State3D& s, const char* context) {
  for (const auto& ax : s.axes) check_physical(ax, context);
}

State3D ground_state(double mass, const Vec3& omega) {
  if (!(mass > 0))
    throw invalid_parameter_error("ground_state: mass must be positive");
  State3D st;
  for (int i = 0; i < 3; ++i) {
    if (!(omega[i] > 0))
      throw invalid_parameter_error(
          "ground_state: trap frequencies must be positive");
    auto& ax = st.axes[i];
    ax.mean_x = 0.0;
    ax.mean_p = 0.0;
    ax.var_x = constants.hbar / (2.0 * mass * omega[i]);
    ax.var_p = constants.hbar * mass * omega[i] / 2.0;
    ax.cov_xp = 0.0;
  }
  return st;
}

SqueezeMetrics squeeze_metrics(const State3D& s, double mass,
                               const Vec3& omega_ref) {
  if (!(mass > 0))
    throw invalid_parameter_error("squeeze_metrics: mass must be positive");
  check_physical(s, "squeeze_metrics");
  SqueezeMetrics m;
  for (int i = 0; i < 3; ++i) {
    if (!(omega_ref[i] > 0))
      throw invalid_parameter_error(
          "squeeze_metrics: reference frequencies must be positive");
    const auto& ax = s.axes[i];
    const double vp0 = constants.hbar * mass * omega_ref[i] / 2.0;
    m.squeezing_db[i] = 10.0 * std::log10(vp0 / ax.var_p);
    m.var_p_absolute[i] = ax.var_p;
    m.purity[i] = purity(ax);
  }
  return m;
}

}  // namespace levsq
